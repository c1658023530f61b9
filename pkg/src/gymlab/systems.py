"""Compatible systems of generalized Young measures indexed by time.

A :class:`SystemGYM` stores one joint measure (the *master*) over a finite
time grid; every finite-tuple marginal is a coordinate projection of it, so
compatibility holds by construction.  Off-grid times are mapped to the last
grid time not exceeding them (piecewise constant interpolation).

Time-continuous families are accessed through :class:`SystemOracle`
objects, which return joint measures for arbitrary finite time tuples.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .gym import (
    Battery,
    DiscreteGYM,
    DiscreteMeasure,
    _finalize,
    barycentre,
    fsum,
    lift_measure,
    linear_image,
    norm_star,
    pair_battery,
    standard_battery,
    validate,
)
from .homfn import EuclidNorm, HomFn, Linear, PositivePart, XiNorm, classify
from .space import SpaceModel, check_same_space

__all__ = [
    "TimeGrid",
    "SystemGYM",
    "SystemOracle",
    "GridOracle",
    "MeasurePathOracle",
    "VariationReport",
    "DerivativeReport",
    "IntegralGapReport",
    "from_path",
    "joint_lift",
    "marginal",
    "step_contributions",
    "variation",
    "ac_modulus",
    "diff_quotient",
    "check_compatibility",
    "derivative_estimate",
    "variation_integral_gap",
    "bar_path",
    "marginal_norms",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times ``a_0 < ... < a_k`` inside ``[0, T]``."""

    times: np.ndarray
    T: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if t.size < 2:
            raise ValueError("a time grid needs at least two times")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ValueError("grid times must be finite and strictly increasing")
        T = float(t[-1]) if self.T is None else float(self.T)
        if t[0] < 0 or t[-1] > T:
            raise ValueError("grid times must lie in [0, T]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "T", T)

    @property
    def k(self) -> int:
        return int(self.times.size - 1)

    def __len__(self):
        return int(self.times.size)

    def index(self, t: float) -> int:
        """Largest ``j`` with ``a_j <= t``."""
        if t < self.times[0] or t > self.times[-1]:
            raise ValueError(f"time {t} outside [{self.times[0]}, {self.times[-1]}]")
        return int(np.searchsorted(self.times, t, side="right") - 1)


@dataclass(frozen=True, eq=False)
class SystemGYM:
    """Time grid plus a master joint measure on ``Xi^(k+1)``."""

    grid: TimeGrid
    dim: int
    master: DiscreteGYM

    def __post_init__(self):
        if self.master.dim != self.dim * len(self.grid):
            raise ValueError("master dimension must be dim * (number of grid times)")
        rep = validate(self.master)
        if not rep.passed:
            raise ValueError(f"master fails validation (projection defect {rep.projection_defect:.3e})")

    @property
    def space(self) -> SpaceModel:
        return self.master.space

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def coords(self, j: int) -> np.ndarray:
        d = self.dim
        return self.master.xi[:, j * d : (j + 1) * d]

    def as_oracle(self) -> "GridOracle":
        return GridOracle(self)


def joint_lift(measures: Sequence[DiscreteMeasure]) -> DiscreteGYM:
    """``delta`` of the tuple ``(p_1, ..., p_m)`` as one measure on ``Xi^m``.

    The joint density is taken cellwise against the common reference
    ``lambda + sum |p_i^s|``: absolutely continuous parts are concatenated, and
    singular parts attached to the same cell form one joint singular vector.
    """
    if not measures:
        raise ValueError("no measures given")
    space, dim = measures[0].space, measures[0].dim
    for p in measures[1:]:
        check_same_space(space, p.space)
        if p.dim != dim:
            raise ValueError("measures have different Xi dimensions")
    ac = np.hstack([p.ac for p in measures])
    sing = np.hstack([p.singular_dense() for p in measures])
    nz = np.flatnonzero(np.any(sing != 0, axis=1))
    joint = DiscreteMeasure(space, dim * len(measures), ac, nz, sing[nz])
    return lift_measure(joint)


def from_path(samples: Sequence[tuple]) -> SystemGYM:
    """System of the path ``t -> p(t)`` sampled at strictly increasing times.

    Parameters
    ----------
    samples : sequence of (t, DiscreteMeasure)
    """
    times = [float(t) for t, _ in samples]
    grid = TimeGrid(np.array(times))
    master = joint_lift([p for _, p in samples])
    return SystemGYM(grid, samples[0][1].dim, master)


def _select(mu: DiscreteGYM, d: int, idx) -> DiscreteGYM:
    n = mu.n_atoms
    m = mu.dim // d
    blocks = mu.xi.reshape(n, m, d)[:, list(idx), :].reshape(n, len(idx) * d)
    out = DiscreteGYM.from_weighted(mu.space, len(idx) * d, mu.cells, blocks, mu.eta, mu.w)
    return _finalize(out, strict=False)


def marginal(sys: SystemGYM, times) -> DiscreteGYM:
    """Joint measure of ``sys`` at ``times`` (off-grid times use the previous grid time)."""
    times = [float(t) for t in np.atleast_1d(times)]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be increasing")
    idx = [sys.grid.index(t) for t in times]
    if idx == list(range(len(sys.grid))):
        return sys.master
    return _select(sys.master, sys.dim, idx)


def marginal_norms(sys: SystemGYM) -> np.ndarray:
    """``norm_star`` of every single-time marginal on the grid."""
    return np.array([norm_star(marginal(sys, (t,))) for t in sys.times])


# ---------------------------------------------------------------------------
# variation


@dataclass(frozen=True)
class VariationReport:
    """Variation over a partition with its per-step contributions."""

    value: float
    partition: tuple
    contributions: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["step", "t_start", "t_end", "contribution"])
        for i, c in enumerate(self.contributions):
            wr.writerow([i, repr(self.partition[i]), repr(self.partition[i + 1]), repr(c)])
        return buf.getvalue()


def _check_subadditive(h: HomFn):
    rep = classify(h, samples=1000)
    if not rep.subadditive:
        raise ValueError("h fails subadditivity sampling")


def step_contributions(sys: SystemGYM, h: HomFn | None = None, check: bool = True) -> np.ndarray:
    """``<h(xi_j - xi_{j-1}), mu>`` for ``j = 1..k``, evaluated atomwise on the master.

    ``h`` acts on Xi; its eta slot is fixed to 0.
    """
    h = XiNorm(sys.dim) if h is None else h
    if h.dim != sys.dim:
        raise ValueError("h acts on the wrong dimension")
    if check:
        _check_subadditive(h)
    mu = sys.master
    zeros = np.zeros(mu.n_atoms)
    out = np.empty(sys.grid.k)
    for j in range(1, len(sys.grid)):
        diff = sys.coords(j) - sys.coords(j - 1)
        out[j - 1] = fsum(mu.w * h.evaluate(mu.cells, diff, zeros)) if mu.n_atoms else 0.0
    return out


def variation(sys: SystemGYM, h: HomFn | None = None, a: float | None = None, b: float | None = None,
              check: bool = True, contributions: np.ndarray | None = None) -> VariationReport:
    """h-variation of the piecewise constant system on ``[a, b]``.

    The supremum over partitions is attained on the grid points inside
    ``[a, b]``.  Precomputed ``contributions`` (from
    :func:`step_contributions`) may be passed to avoid recomputation.
    """
    a = float(sys.times[0]) if a is None else float(a)
    b = float(sys.times[-1]) if b is None else float(b)
    if b < a:
        raise ValueError("need a <= b")
    ja, jb = sys.grid.index(a), sys.grid.index(b)
    contrib = step_contributions(sys, h, check) if contributions is None else contributions
    steps = [float(c) for c in contrib[ja:jb]]
    part = [a] + [float(t) for t in sys.times[ja + 1 : jb + 1]]
    if part[-1] != b:
        part.append(b)
        steps.append(0.0)
    if len(part) == 1:
        part.append(b)
        steps.append(0.0)
    return VariationReport(math.fsum(steps), tuple(part), tuple(steps))


def ac_modulus(sys: SystemGYM, delta: float, h: HomFn | None = None) -> float:
    """Largest summed increment over disjoint grid intervals of total length ``<= delta``.

    An interval's increment is dominated by the sum of its grid steps
    (triangle inequality), so optimal families consist of single steps and
    the problem is a 0/1 knapsack over steps.  It is solved exactly by a
    Pareto-front dynamic program over (length, increment) pairs.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    inc = step_contributions(sys, h, check=h is not None)
    lengths = np.diff(sys.times)
    slack = 1e-12 * float(sys.times[-1] - sys.times[0])
    front = [(0.0, 0.0)]
    for c, v in zip(lengths, inc):
        cand = front + [(fc + c, fv + v) for fc, fv in front if fc + c <= delta + slack]
        cand.sort(key=lambda p: (p[0], -p[1]))
        front = []
        best = -1.0
        for fc, fv in cand:
            if fv > best:
                front.append((fc, fv))
                best = fv
    return max(v for _, v in front)


# ---------------------------------------------------------------------------
# oracles


class SystemOracle:
    """Sampler of joint measures for finite increasing time tuples.

    Subclasses set ``space``, ``dim``, ``span = (t_lo, t_hi)`` and
    ``resolution`` and implement :meth:`joint`.
    """

    space: SpaceModel
    dim: int
    span: tuple
    resolution: float

    def joint(self, times) -> DiscreteGYM:
        raise NotImplementedError

    def _check_times(self, times):
        times = [float(t) for t in times]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        lo, hi = self.span
        if times[0] < lo or times[-1] > hi:
            raise ValueError("times outside the oracle's span")
        return times

    def system(self, times) -> SystemGYM:
        """Grid system from the joint measure at ``times``."""
        times = self._check_times(times)
        return SystemGYM(TimeGrid(np.array(times), self.span[1]), self.dim, self.joint(times))


@dataclass(eq=False)
class GridOracle(SystemOracle):
    """Piecewise constant interpolation of a grid system."""

    sys: SystemGYM

    def __post_init__(self):
        self.space = self.sys.space
        self.dim = self.sys.dim
        self.span = (float(self.sys.times[0]), float(self.sys.times[-1]))
        self.resolution = float(np.min(np.diff(self.sys.times)))

    def joint(self, times):
        return marginal(self.sys, self._check_times(times))


@dataclass(eq=False)
class MeasurePathOracle(SystemOracle):
    """Joint lifts ``delta_(p(t_1), ..., p(t_m))`` of a measure-valued path ``p``."""

    space: SpaceModel
    dim: int
    path: Callable
    span: tuple = (0.0, 1.0)
    resolution: float = 0.0

    def joint(self, times):
        return joint_lift([self.path(t) for t in self._check_times(times)])


def diff_quotient(src, t1: float, t2: float) -> DiscreteGYM:
    """Image of the pair measure at ``(t1, t2)`` under ``(xi_2 - xi_1)/(t2 - t1)``."""
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    if isinstance(src, SystemGYM):
        joint, d = marginal(src, (t1, t2)), src.dim
    else:
        joint, d = src.joint((t1, t2)), src.dim
    # subtract first so that equal coordinates cancel exactly (a matmul may leave fma residues)
    dxi = (joint.xi[:, d:] - joint.xi[:, :d]) / (t2 - t1)
    out = DiscreteGYM.from_weighted(joint.space, d, joint.cells, dxi, joint.eta, joint.w)
    return _finalize(out, strict=False)


def _probe_battery(space, dim):
    return standard_battery(space, dim, size=8)


def check_compatibility(oracle: SystemOracle, times, tol: float = 1e-10) -> float:
    """Compare projections of ``joint(times)`` with joints of every singleton and adjacent pair.

    Returns the largest pairing discrepancy on a probe battery; raises if it
    exceeds ``tol``.
    """
    times = list(times)
    J = oracle.joint(times)
    d = oracle.dim
    worst = 0.0
    subs = [(i,) for i in range(len(times))] + [(i, i + 1) for i in range(len(times) - 1)]
    for sub in subs:
        proj = _select(J, d, sub)
        direct = oracle.joint([times[i] for i in sub])
        bat = _probe_battery(oracle.space, d * len(sub))
        diff = np.max(np.abs(pair_battery(bat, proj) - pair_battery(bat, direct)))
        worst = max(worst, float(diff))
    if worst > tol:
        raise ValueError(f"oracle fails projection compatibility (discrepancy {worst:.3e})")
    return worst


# ---------------------------------------------------------------------------
# weak* derivatives


@dataclass(frozen=True, eq=False)
class DerivativeReport:
    """Outcome of :func:`derivative_estimate`.

    ``left[i, m]`` and ``right[i, m]`` are the pairings of battery member ``m``
    with the one-sided quotients at ``eps[i]``.  ``status`` is one of
    ``converged``, ``one-sided-left``, ``one-sided-right`` or ``no-limit``.
    """

    status: str
    t0: float
    eps: tuple
    left: np.ndarray
    right: np.ndarray
    residuals: np.ndarray
    names: tuple
    estimate: DiscreteGYM | None
    witness: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["eps", "member", "left", "right"])
        for i, e in enumerate(self.eps):
            for m, name in enumerate(self.names):
                wr.writerow([repr(float(e)), name, repr(float(self.left[i, m])), repr(float(self.right[i, m]))])
        return buf.getvalue()


def derivative_estimate(oracle: SystemOracle, t0: float, eps_schedule, battery: Battery, tol: float,
                        window: int = 3, probe: bool = True) -> DerivativeReport:
    """Estimate the weak* derivative at ``t0`` from one-sided difference quotients.

    Both one-sided sequences of battery pairings must be Cauchy within
    ``tol`` over the last ``window`` schedule entries, and their final values
    must agree within ``tol``.  The estimate is the right quotient at the
    smallest step.

    Raises
    ------
    ValueError
        If ``t0`` is not interior for the schedule or the oracle fails the
        probe compatibility check.
    """
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("schedule must be positive and strictly decreasing")
    lo, hi = oracle.span
    if not (lo <= t0 - eps[0] and t0 + eps[0] <= hi):
        raise ValueError("t0 is not interior for the given schedule")
    if battery.dim != oracle.dim:
        raise ValueError("battery acts on the wrong dimension")
    if probe:
        check_compatibility(oracle, (t0 - eps[0], t0, t0 + eps[0]))
    m = len(battery)
    L, R = np.empty((eps.size, m)), np.empty((eps.size, m))
    last = None
    for i, e in enumerate(eps):
        L[i] = pair_battery(battery, diff_quotient(oracle, t0 - e, t0))
        last = diff_quotient(oracle, t0, t0 + e)
        R[i] = pair_battery(battery, last)
    w = min(window, eps.size)
    spread_l = np.ptp(L[-w:], axis=0)
    spread_r = np.ptp(R[-w:], axis=0)
    agree = np.abs(L[-1] - R[-1])
    res = np.maximum(np.maximum(spread_l, spread_r), agree)
    cl, cr = bool(np.all(spread_l <= tol)), bool(np.all(spread_r <= tol))
    if cl and cr and np.all(agree <= tol):
        status = "converged"
    elif cl and not cr:
        status = "one-sided-left"
    elif cr and not cl:
        status = "one-sided-right"
    else:
        status = "no-limit"
    witness = {}
    if status != "converged":
        worst = int(np.argmax(res))
        witness = {
            "member": battery.names[worst],
            "left_spread": float(spread_l[worst]),
            "right_spread": float(spread_r[worst]),
            "disagreement": float(agree[worst]),
        }
    return DerivativeReport(
        status, float(t0), tuple(float(e) for e in eps), L, R, res, battery.names,
        last if status == "converged" else None, witness,
    )


@dataclass(frozen=True)
class IntegralGapReport:
    """Grid variation (``lhs``), midpoint integral of derivative pairings (``rhs``)."""

    lhs: float
    rhs: float
    gap: float
    nodes: tuple
    values: tuple
    failed: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["node", "pairing", "converged"])
        for t, v in zip(self.nodes, self.values):
            wr.writerow([repr(t), repr(v), int(t not in self.failed)])
        return buf.getvalue()


def variation_integral_gap(oracle: SystemOracle, h: HomFn, a: float, b: float, dt: float, tol: float,
                           eps_schedule=None) -> IntegralGapReport:
    """Compare the grid h-variation at step ``dt`` with ``int <h, derivative> dt``.

    The integral uses the midpoint rule; at every node the derivative is
    estimated with steps ``dt * 2**-(1..4)`` unless a schedule (relative to
    ``dt``) is given.  Nodes where the estimate does not converge are treated
    as part of the exceptional null set and contribute nothing; more than 5%
    of such nodes is an error.
    """
    n = int(round((b - a) / dt))
    if n < 1 or abs(a + n * dt - b) > 1e-12 * max(1.0, abs(b)):
        raise ValueError("dt must divide [a, b]")
    _check_subadditive(h)
    grid = a + dt * np.arange(n + 1)
    grid[-1] = b
    sys = oracle.system(grid)
    lhs = variation(sys, h, check=False).value
    rel = np.asarray(eps_schedule if eps_schedule is not None else 2.0 ** -np.arange(1, 5), float)
    bat = Battery((h,), ("h",))
    nodes = a + dt * (np.arange(n) + 0.5)
    check_compatibility(oracle, (float(nodes[0]) - dt * rel[0], float(nodes[0]), float(nodes[0]) + dt * rel[0]))
    vals, failed = [], []
    for t in nodes:
        rep = derivative_estimate(oracle, float(t), dt * rel, bat, tol, probe=False)
        if rep.converged:
            vals.append(float(rep.right[-1, 0]))
        else:
            vals.append(0.0)
            failed.append(float(t))
    if len(failed) > 0.05 * n:
        raise ValueError(f"derivative estimate failed at {len(failed)} of {n} nodes")
    rhs = dt * math.fsum(vals)
    return IntegralGapReport(lhs, rhs, lhs - rhs, tuple(float(t) for t in nodes), tuple(vals), tuple(failed))


def bar_path(sys: SystemGYM, tol: float = 1e-12) -> list:
    """Barycentres of the single-time marginals, checked against the joint barycentre."""
    joint = barycentre(sys.master)
    out = []
    d = sys.dim
    for j, t in enumerate(sys.times):
        b = barycentre(marginal(sys, (t,)))
        comp = joint.component(slice(j * d, (j + 1) * d))
        if not b.allclose(comp, tol * max(1.0, norm_star(sys.master))):
            raise ValueError(f"joint barycentre inconsistent at grid time {t}")
        out.append(b)
    return out

"""Constructive approximation and sequence experiments.

Step functions on refined interval partitions, their (joint) lifts, the
density construction turning a generalized Young measure into functions
whose lifts approach it, oscillating and concentrating sequence generators,
a finite-battery subsequence extraction harness and the semicontinuity
check for h-variation.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .gym import (
    Battery,
    DiscreteGYM,
    YoungPart,
    _finalize,
    decompose,
    fsum,
    linear_image,
    norm_star,
    pair,
    validate,
)
from .homfn import HomFn, XiNorm
from .space import Interval, SpaceModel
from .systems import SystemGYM, SystemOracle, marginal, marginal_norms, variation

__all__ = [
    "DensitySchedule",
    "StepFunction",
    "PeriodicStep",
    "DensityReport",
    "StepPathOracle",
    "LimitReport",
    "lift_step",
    "lift_steps",
    "density_approximate",
    "density_report",
    "density_error_scale",
    "scaled_profile",
    "oscillation_path",
    "concentration_profile",
    "concentration_sequence",
    "helly_extract",
    "semicontinuity_margin",
]


# ---------------------------------------------------------------------------
# step functions


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Piecewise constant Xi-valued function on a refinement of an interval partition.

    Attributes
    ----------
    base : Interval
        The coarse space; every piece lies inside exactly one base cell.
    edges : ndarray, shape (m + 1,)
        Increasing piece boundaries containing all base cell edges.
    values : ndarray, shape (m, d)
    parents : ndarray, shape (m,)
        Base cell of each piece.
    carrier : ndarray of bool, optional
        Marks pieces that carry concentration (set by the density construction).
    """

    base: Interval
    edges: np.ndarray
    values: np.ndarray
    parents: np.ndarray
    carrier: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.intp))
        if e.ndim != 1 or v.shape[0] != e.size - 1 or self.parents.shape != (v.shape[0],):
            raise ValueError("edges, values and parents have inconsistent lengths")
        if np.any(np.diff(e) < 0):
            raise ValueError("edges must be nondecreasing")
        if e[0] != self.base.lo or e[-1] != self.base.hi:
            raise ValueError("edges must span the base interval")
        if not np.all(np.isfinite(v)):
            raise ValueError("step values must be finite")
        mid = 0.5 * (e[:-1] + e[1:])
        if not np.array_equal(self.base.cell_of(mid), self.parents) or not np.all(np.isin(self.base.edges, e)):
            raise ValueError("refinement is inconsistent with the base partition")
        if self.carrier is not None:
            object.__setattr__(self, "carrier", np.asarray(self.carrier, dtype=bool).reshape(-1))

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)

    @classmethod
    def make(cls, base: Interval, breakpoints, fn: Callable, dim: int | None = None):
        """Sample ``fn`` (vectorized in x) at piece midpoints.

        ``breakpoints`` are merged with the base cell edges; points outside
        the interval are ignored.
        """
        bp = np.asarray(breakpoints, dtype=float).reshape(-1)
        bp = bp[(bp > base.lo) & (bp < base.hi)]
        e = np.unique(np.r_[base.edges, bp])
        mid = 0.5 * (e[:-1] + e[1:])
        vals = np.asarray(fn(mid), dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1 if dim is None else dim)
        return cls(base, e, vals, base.cell_of(mid))

    @classmethod
    def from_cells(cls, base: Interval, values):
        """Cellwise constant function on the base partition itself."""
        v = np.asarray(values, dtype=float)
        return cls(base, base.edges.copy(), v.reshape(base.ncells, -1), np.arange(base.ncells))

    @classmethod
    def zero(cls, base: Interval, dim: int = 1):
        return cls.from_cells(base, np.zeros((base.ncells, dim)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.values.shape[0] - 1)
        return self.values[i]

    def refine(self, edges) -> "StepFunction":
        """Same function on a finer set of edges (must contain ``self.edges``)."""
        e = np.asarray(edges, dtype=float)
        mid = 0.5 * (e[:-1] + e[1:])
        i = np.clip(np.searchsorted(self.edges, mid, side="right") - 1, 0, self.values.shape[0] - 1)
        carrier = None if self.carrier is None else self.carrier[i]
        return StepFunction(self.base, e, self.values[i], self.base.cell_of(mid), carrier)

    def __add__(self, other: "StepFunction") -> "StepFunction":
        if not self.base.same_as(other.base) or self.dim != other.dim:
            raise ValueError("step functions live on different spaces")
        e = np.unique(np.r_[self.edges, other.edges])
        a, b = self.refine(e), other.refine(e)
        return StepFunction(self.base, e, a.values + b.values, a.parents)

    def scaled(self, c: float) -> "StepFunction":
        return StepFunction(self.base, self.edges, c * self.values, self.parents, self.carrier)

    def norm_integral(self) -> float:
        """``int sqrt(1 + |u|^2) dx``."""
        return fsum(self.lengths * np.sqrt(1.0 + np.sum(self.values**2, axis=1)))

    def l1(self) -> float:
        return fsum(self.lengths * np.linalg.norm(self.values, axis=1))


def _common_edges(steps: Sequence[StepFunction]) -> np.ndarray:
    base = steps[0].base
    for s in steps[1:]:
        if not s.base.same_as(base):
            raise ValueError("step functions live on different spaces")
    if len(steps) == 1:
        return steps[0].edges
    return np.unique(np.concatenate([s.edges for s in steps]))


def lift_steps(steps: Sequence[StepFunction]) -> DiscreteGYM:
    """Joint lift ``delta_(u_1, ..., u_m)`` by exact cellwise quadrature.

    Each piece of the common refinement contributes the atom
    ``(parent cell, length * (u_1, ..., u_m), length)``.
    """
    if not steps:
        raise ValueError("no step functions given")
    e = _common_edges(steps)
    mid = 0.5 * (e[:-1] + e[1:])
    cols = []
    for s in steps:
        i = np.clip(np.searchsorted(s.edges, mid, side="right") - 1, 0, s.values.shape[0] - 1)
        cols.append(s.values[i])
    vals = np.hstack(cols)
    base = steps[0].base
    length = np.diff(e)
    keep = length > 0
    mu = DiscreteGYM.from_weighted(
        base, vals.shape[1], base.cell_of(mid[keep]), length[keep, None] * vals[keep], length[keep], np.ones(int(keep.sum()))
    )
    return _finalize(mu, strict=True)


def lift_step(u: StepFunction) -> DiscreteGYM:
    return lift_steps([u])


# ---------------------------------------------------------------------------
# density construction


@dataclass(frozen=True)
class DensitySchedule:
    """Strictly decreasing positive levels ``sigma_n`` below ``min(1, lambda(X))``."""

    sigmas: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigmas)
        if not s or any(x <= 0 for x in s) or any(b >= a for a, b in zip(s, s[1:])):
            raise ValueError("sigma schedule must be positive and strictly decreasing")
        object.__setattr__(self, "sigmas", s)

    @classmethod
    def dyadic(cls, levels):
        return cls(tuple(2.0 ** -int(n) for n in levels))

    def check(self, space: SpaceModel):
        if self.sigmas[0] >= min(1.0, space.total_mass):
            raise ValueError("sigma must stay below min(1, lambda(X))")

    def __len__(self):
        return len(self.sigmas)


def density_approximate(mu: DiscreteGYM, n: int, schedule: DensitySchedule, mode: str = "singular") -> StepFunction:
    """Step function whose lift approximates ``mu`` at level ``n``.

    Every cell is split into a concentration carrier and a Young remainder.
    A varifold atom of mass ``m`` and direction ``e`` gets a carrier of
    length ``l = min(sigma * m, h / (2 J))`` (``J`` varifold atoms in the
    cell) on which the value is ``(m / l) e``, so its size is at least
    ``1 / sigma``.  The remainder is cut into blocks of length at most
    ``sigma`` and each block is shared among the Young values of the cell
    in proportion to their masses.  With ``mode="singular"`` the carriers
    sit at the left end of the cell; with ``mode="diffuse"`` every block
    receives its proportional share of every carrier.

    Parameters
    ----------
    mu : DiscreteGYM
        Valid measure on an :class:`Interval`.
    n : int
        Index into ``schedule.sigmas``.
    schedule : DensitySchedule
    mode : {"singular", "diffuse"}

    Raises
    ------
    ValueError
        If the space cannot be subdivided (the construction needs a
        nonatomic reference measure), the measure is invalid or ``n`` is
        out of range.
    """
    space = mu.space
    if not isinstance(space, Interval) or not space.subdividable:
        raise ValueError("density construction needs a nonatomic (subdividable) reference measure")
    if mode not in ("singular", "diffuse"):
        raise ValueError("mode must be 'singular' or 'diffuse'")
    if not validate(mu).passed:
        raise ValueError("target measure fails validation")
    schedule.check(space)
    sigma = schedule.sigmas[n]
    young, var = decompose(mu)
    h = space.width
    edges, vals, carrier = [float(space.lo)], [], []

    def push(length, value, conc):
        edges.append(edges[-1] + length)
        vals.append(value)
        carrier.append(conc)

    for c in range(space.ncells):
        start = float(space.edges[c])
        edges[-1] = start
        ysel = np.flatnonzero(young.cells == c)
        vsel = np.flatnonzero(var.cells == c)
        J = vsel.size
        lens = [min(sigma * float(var.mass[j]), h / (2 * J)) for j in vsel]
        conc_vals = [(float(var.mass[j]) / l) * var.directions[j] for j, l in zip(vsel, lens)]
        L = math.fsum(lens)
        fracs = young.mass[ysel] / math.fsum(young.mass[ysel]) if ysel.size else np.zeros(0)
        nblocks = max(1, math.ceil(h / sigma - 1e-12))
        if mode == "singular":
            for l, v in zip(lens, conc_vals):
                push(l, v, True)
            block = (h - L) / nblocks
            for _ in range(nblocks):
                for fr, j in zip(fracs, ysel):
                    push(block * fr, young.values[j], False)
        else:
            for _ in range(nblocks):
                for l, v in zip(lens, conc_vals):
                    push(l / nblocks, v, True)
                for fr, j in zip(fracs, ysel):
                    push((h - L) / nblocks * fr, young.values[j], False)
        # close the cell exactly on its edge
        edges[-1] = float(space.edges[c + 1])
    e = np.asarray(edges)
    v = np.asarray(vals, dtype=float).reshape(-1, mu.dim)
    carrier = np.asarray(carrier, dtype=bool)
    keep = np.diff(e) > 0
    e = np.r_[e[:-1][keep], e[-1]]
    v, carrier = v[keep], carrier[keep]
    mid = 0.5 * (e[:-1] + e[1:])
    return StepFunction(space, e, v, space.cell_of(mid), carrier)


@dataclass(frozen=True)
class DensityReport:
    """Diagnostics of one density level.

    ``bound`` is ``sigma lambda(X) + <sqrt(1+|xi|^2), Young> + varifold mass * sqrt(1+sigma^2)``,
    which must dominate ``norm_integral``.  ``min_concentration`` is the
    smallest value size on carrier pieces (``inf`` without carriers).
    """

    sigma: float
    norm_integral: float
    target_norm: float
    bound: float
    carrier_length: float
    min_concentration: float

    @property
    def bound_holds(self) -> bool:
        return self.norm_integral <= self.bound * (1 + 1e-12)

    @property
    def concentration_holds(self) -> bool:
        return self.min_concentration >= (1.0 / self.sigma) * (1 - 1e-12)


def density_report(mu: DiscreteGYM, u: StepFunction, sigma: float) -> DensityReport:
    young, var = decompose(mu)
    young_norm = fsum(young.mass * np.sqrt(1.0 + np.sum(young.values**2, axis=1)))
    vm = var.total_mass()
    bound = sigma * mu.space.total_mass + young_norm + vm * math.sqrt(1.0 + sigma * sigma)
    carrier = u.carrier if u.carrier is not None else np.zeros(u.values.shape[0], bool)
    sizes = np.linalg.norm(u.values[carrier], axis=1)
    return DensityReport(
        sigma,
        u.norm_integral(),
        norm_star(mu),
        bound,
        fsum(u.lengths[carrier]),
        float(sizes.min()) if sizes.size else math.inf,
    )


def density_error_scale(mu: DiscreteGYM) -> float:
    """``K = sum_j m_j (1 + y_c(j))`` over varifold atoms, ``y_c`` the Young norm density of the atom's cell.

    A carrier of length ``l <= sigma m`` costs at most ``l`` in its own norm and
    removes ``l`` from a remainder of norm density ``y_c``, so
    ``|norm_integral - norm_star| <= sigma K``.  For test functions that are
    1-Lipschitz on ``(xi, eta)`` and depend on ``x`` only through the cell,
    each pairing moves by at most ``sigma K`` as well, so a battery gap with
    weights ``2**-i`` stays below ``2 sigma K``.
    """
    young, var = decompose(mu)
    dens = _cell_norm_density(young, mu.space)
    return math.fsum(var.mass * (1.0 + dens[var.cells]))


def _cell_norm_density(young: YoungPart, space) -> np.ndarray:
    per = np.bincount(young.cells, weights=young.mass * np.sqrt(1.0 + np.sum(young.values**2, axis=1)),
                      minlength=space.ncells)
    return per / space.weights


# ---------------------------------------------------------------------------
# oscillation and concentration


@dataclass(frozen=True)
class PeriodicStep:
    """Periodic step profile: ``values[i]`` on ``[starts[i], starts[i+1])`` modulo ``period``."""

    period: float
    starts: tuple
    values: tuple

    def __post_init__(self):
        s = tuple(float(x) for x in self.starts)
        v = tuple(float(x) for x in self.values)
        if self.period <= 0 or len(s) != len(v) or not s or s[0] != 0.0:
            raise ValueError("profile needs a positive period and starts beginning at 0")
        if any(b <= a for a, b in zip(s, s[1:])) or s[-1] >= self.period:
            raise ValueError("starts must increase inside [0, period)")
        object.__setattr__(self, "starts", s)
        object.__setattr__(self, "values", v)

    @classmethod
    def square_wave(cls):
        """``+1`` on ``[2k, 2k+1)``, ``-1`` on ``[2k+1, 2k+2)``."""
        return cls(2.0, (0.0, 1.0), (1.0, -1.0))

    def __call__(self, y):
        r = np.mod(np.asarray(y, dtype=float), self.period)
        i = np.searchsorted(np.asarray(self.starts), r, side="right") - 1
        return np.asarray(self.values)[i]

    def breakpoints(self, lo: float, hi: float) -> np.ndarray:
        """All jump locations in ``(lo, hi)``."""
        k0, k1 = math.floor(lo / self.period) - 1, math.ceil(hi / self.period) + 1
        ks = np.arange(k0, k1 + 1, dtype=float)
        pts = (ks[:, None] * self.period + np.asarray(self.starts)[None, :]).reshape(-1)
        return pts[(pts > lo) & (pts < hi)]

    def mean_abs(self) -> float:
        st = np.r_[self.starts, self.period]
        return math.fsum(np.diff(st) * np.abs(self.values)) / self.period


def scaled_profile(w: PeriodicStep, space: Interval, scale: float, amplitude: float = 1.0) -> StepFunction:
    """Exact step function ``x -> amplitude * w(x / scale)`` (zero when ``scale == 0``)."""
    if scale == 0:
        return StepFunction.zero(space)
    lo, hi = sorted((space.lo / scale, space.hi / scale))
    bp = scale * w.breakpoints(lo, hi)
    return StepFunction.make(space, bp, lambda x: amplitude * w(x / scale))


@dataclass(eq=False)
class StepPathOracle(SystemOracle):
    """Joint lifts of a path of step functions ``t -> u(t)``."""

    space: Interval
    dim: int
    path: Callable
    span: tuple
    resolution: float

    def joint(self, times):
        return lift_steps([self.path(t) for t in self._check_times(times)])


def oscillation_path(w: PeriodicStep, scale_fn: Callable, space: Interval, res: int,
                     span: tuple = (0.0, 2.0)) -> StepPathOracle:
    """Oracle for ``u(t, x) = s(t) w(x / s(t))`` with ``s = scale_fn`` (``u = 0`` where ``s = 0``).

    ``res`` is the quadrature resolution the caller commits to: a query
    whose oscillation period ``|s| * period`` is shorter than four
    resolution cells (``4 lambda(X) / res``) is refused.
    """
    if int(res) != res or res < 1:
        raise ValueError("res must be a positive integer")
    min_period = 4.0 * space.total_mass / res

    def path(t):
        s = float(scale_fn(t))
        if s != 0 and abs(s) * w.period < min_period:
            raise ValueError(
                f"oscillation at t={t} has period {abs(s) * w.period:.3e} below the resolution guard {min_period:.3e}"
            )
        return scaled_profile(w, space, s, s)

    return StepPathOracle(space, 1, path, (float(span[0]), float(span[1])), float(space.total_mass / res))


def concentration_profile(direction, mass: float, carrier: tuple, space: Interval) -> StepFunction:
    """``(mass / |carrier|) * direction`` on the interval ``carrier = (a, b)``, zero elsewhere."""
    d = np.asarray(direction, dtype=float).reshape(-1)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    a, b = float(carrier[0]), float(carrier[1])
    if not (space.lo <= a < b <= space.hi):
        raise ValueError("carrier must be a nonempty subinterval of the space")
    height = mass / (b - a)

    def fn(x):
        inside = (x >= a) & (x < b)
        return inside[:, None] * (height * d)[None, :]

    return StepFunction.make(space, [a, b], fn, dim=d.size)


def concentration_sequence(direction, mass: float, carrier: Callable, k: int, space: Interval) -> DiscreteGYM:
    """Lift of ``u_k = (mass / lambda_k) direction`` on ``carrier(k)``.

    ``carrier`` maps the level ``k`` to an interval ``(a_k, b_k)`` whose length
    shrinks to zero.
    """
    return lift_step(concentration_profile(direction, mass, carrier(k), space))


# ---------------------------------------------------------------------------
# subsequence extraction


@dataclass(frozen=True, eq=False)
class LimitReport:
    """Outcome of :func:`helly_extract`.

    ``functionals`` names each monitored quantity as ``member@t`` (single
    time) or ``member@t1:t2`` (increment between adjacent times).
    """

    indices: tuple
    functionals: tuple
    limits: np.ndarray
    residuals: np.ndarray
    tol: float
    theta: tuple
    limit: SystemGYM | None
    limit_variation: float | None = None
    limit_max_norm: float | None = None
    bounds: tuple = ()
    notes: tuple = field(default_factory=tuple)

    @property
    def converged(self) -> bool:
        return len(self.indices) >= 2 and bool(np.all(self.residuals <= self.tol))

    @property
    def bounds_hold(self) -> bool:
        if self.limit is None:
            return False
        C, Cs = self.bounds
        slack = 1e-12 * max(1.0, C + Cs)
        return self.limit_variation <= C + slack and self.limit_max_norm <= Cs + C + slack

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["functional", "residual", "limit"])
        for name, r, v in zip(self.functionals, self.residuals, self.limits):
            wr.writerow([name, repr(float(r)), repr(float(v))])
        return buf.getvalue()


def _select_cluster(vals: np.ndarray, idx: np.ndarray, tol: float) -> np.ndarray:
    """Largest subset within ``tol / 2`` of one of its members; ties favour larger values."""
    v = vals[idx]
    best, best_key = None, None
    for j in range(v.size):
        members = np.flatnonzero(np.abs(v - v[j]) <= 0.5 * tol)
        key = (members.size, v[j])
        if best_key is None or key > best_key:
            best, best_key = members, key
    return idx[best]


def _atoms_close(a: DiscreteGYM, b: DiscreteGYM, tol: float) -> bool:
    if a.n_atoms != b.n_atoms:
        return False
    if a.n_atoms == 0:
        return True
    za = np.column_stack([a.xi, a.eta])
    zb = np.column_stack([b.xi, b.eta])
    cost = np.linalg.norm(za[:, None, :] - zb[None, :, :], axis=2) + np.abs(a.w[:, None] - b.w[None, :])
    cost = np.where(a.cells[:, None] == b.cells[None, :], cost, 1e300)
    r, c = linear_sum_assignment(cost)
    return bool(np.max(cost[r, c]) <= tol)


def _functional_table(seq, battery: Battery, D):
    d = battery.dim
    inc = np.hstack([-np.eye(d), np.eye(d)])
    names, rows = [], []
    for t in D:
        for name in battery.names:
            names.append(f"{name}@{t!r}")
    for t1, t2 in zip(D, D[1:]):
        for name in battery.names:
            names.append(f"{name}@{t1!r}:{t2!r}")
    for sys in seq:
        row = []
        for t in D:
            m = marginal(sys, (t,))
            row.extend(pair(f, m) for f in battery.members)
        for t1, t2 in zip(D, D[1:]):
            m = linear_image(marginal(sys, (t1, t2)), inc)
            row.extend(pair(f, m) for f in battery.members)
        rows.append(row)
    return tuple(names), np.asarray(rows, dtype=float)


def helly_extract(seq: Sequence[SystemGYM], battery: Battery, D, tol: float, bounds: tuple) -> LimitReport:
    """Select a subsequence along which every monitored functional is Cauchy within ``tol``.

    Functionals are battery pairings with the single-time marginals at the
    times in ``D`` and with the increments between adjacent times of ``D``.
    They are processed in a fixed order; each step keeps the largest group
    of surviving indices whose values lie within ``tol / 2`` of one of them.
    If the selected masters agree atom by atom within ``tol`` (optimal
    matching), the last one is reported as the limit system together with
    its variation and largest marginal norm.

    Parameters
    ----------
    bounds : (C, C_star)
        Declared bounds on the total variation and on the norm at the first
        grid time.

    Raises
    ------
    ValueError
        On an empty battery or time set, mismatched grids, or an input
        violating the declared bounds.
    """
    D = tuple(float(t) for t in D)
    if len(battery) == 0 or not D:
        raise ValueError("need a nonempty battery and time set")
    if not seq:
        raise ValueError("empty sequence")
    if tol <= 0:
        raise ValueError("tol must be positive")
    C, Cs = (float(b) for b in bounds)
    grid = seq[0].times
    for sys in seq:
        if not np.array_equal(sys.times, grid) or not sys.space.same_as(seq[0].space):
            raise ValueError("sequence elements live on different grids or spaces")
        if sys.dim != battery.dim:
            raise ValueError("battery acts on the wrong dimension")
    notes = []
    for k, sys in enumerate(seq):
        V = variation(sys, check=False).value
        n0 = norm_star(marginal(sys, (float(grid[0]),)))
        slack = 1e-12 * max(1.0, C + Cs)
        if V > C + slack or n0 > Cs + slack:
            raise ValueError(f"element {k} violates the declared bounds (Var {V:.6g}, norm {n0:.6g})")
        worst = float(np.max(marginal_norms(sys)))
        if worst > Cs + C + slack:
            raise ValueError(f"element {k} breaks the marginal norm bound ({worst:.6g} > {Cs + C:.6g})")
    names, table = _functional_table(seq, battery, D)
    idx = np.arange(len(seq))
    for j in range(table.shape[1]):
        idx = _select_cluster(table[:, j], idx, tol)
    sel = table[idx]
    residuals = np.ptp(sel, axis=0)
    limits = sel[-1]
    nb = len(battery)
    theta = tuple(
        t for i, t in enumerate(D) if idx.size >= 2 and np.all(residuals[i * nb : (i + 1) * nb] <= tol)
    )
    if idx.size < 2:
        notes.append("selected subsequence has fewer than two elements")
    limit = None
    lv = ln = None
    masters = [seq[int(i)].master for i in idx]
    tail = masters[len(masters) // 2 :]
    if idx.size >= 2 and all(_atoms_close(m, tail[-1], tol) for m in tail):
        limit = seq[int(idx[-1])]
        lv = variation(limit, check=False).value
        ln = float(np.max(marginal_norms(limit)))
    elif idx.size >= 2:
        notes.append("atom sets of the selected masters did not settle; no limit assembled")
    return LimitReport(
        tuple(int(i) for i in idx), names, limits, residuals, float(tol), theta, limit, lv, ln, (C, Cs), tuple(notes)
    )


def semicontinuity_margin(seq: Sequence[SystemGYM], limit: SystemGYM, h: HomFn | None, D, battery: Battery,
                          tol: float = 1e-6) -> float:
    """``min_k Var_h(seq[k]) - Var_h(limit)`` over the whole grid.

    The last element's pairings on ``D`` (single times) must match the
    limit's within ``tol``; otherwise the convergence precondition fails.
    """
    if not seq:
        raise ValueError("empty sequence")
    D = tuple(float(t) for t in D)
    last = seq[-1]
    for t in D:
        a, b = marginal(last, (t,)), marginal(limit, (t,))
        for name, f in zip(battery.names, battery.members):
            if abs(pair(f, a) - pair(f, b)) > tol:
                raise ValueError(f"sequence does not converge to the limit on {name} at t={t}")
    h = XiNorm(limit.dim) if h is None else h
    ref = variation(limit, h).value
    return min(variation(s, h, check=False).value for s in seq) - ref

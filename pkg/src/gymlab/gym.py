"""Atomic generalized Young measures in homogeneous coordinates.

A :class:`DiscreteGYM` is a finite sum of weighted point masses at
``(cell, xi, eta)`` with ``|(xi, eta)| = 1`` and ``eta >= 0``.  Atoms with
``eta > 0`` describe oscillations (values ``xi/eta``); atoms with ``eta = 0``
describe concentration in direction ``xi``.  The normalization
``sum_{atoms in c} w * eta = lambda(c)`` is the projection property.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .homfn import (
    INF,
    EtaPart,
    EuclidNorm,
    HomFn,
    HomMap,
    Linear,
    Max,
    Min,
    PositivePart,
    XiNorm,
    classify,
    hom_norm,
    sphere_grid,
)
from .space import SpaceModel, check_same_space

__all__ = [
    "DiscreteMeasure",
    "DiscreteGYM",
    "YoungPart",
    "VarifoldPart",
    "ValidationReport",
    "Battery",
    "standard_battery",
    "lift_measure",
    "lift_function",
    "lift_young",
    "pair",
    "pair_battery",
    "norm_star",
    "validate",
    "image",
    "decompose",
    "recompose",
    "barycentre",
    "project_X",
    "jensen_gap",
    "contact_support_check",
    "ContactReport",
    "contact_report",
    "wstar_gap",
    "disintegrate",
]

PROJECTION_TOL = 1e-12
MERGE_TOL = 1e-10


def fsum(values) -> float:
    """Exactly rounded sum; +inf absorbs."""
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size and np.isposinf(arr).any():
        return INF
    return math.fsum(arr.tolist())


def _cell_sums(cells, values, ncells):
    """Per-cell exactly rounded sums of ``values`` (1-D or 2-D)."""
    values = np.asarray(values, dtype=float)
    out = np.zeros((ncells,) + values.shape[1:])
    if cells.size == 0:
        return out
    order = np.argsort(cells, kind="stable")
    cs = cells[order]
    vs = values[order]
    starts = np.flatnonzero(np.r_[True, cs[1:] != cs[:-1]])
    ends = np.r_[starts[1:], cs.size]
    for s, e in zip(starts, ends):
        block = vs[s:e]
        if block.ndim == 1:
            out[cs[s]] = math.fsum(block.tolist())
        else:
            out[cs[s]] = [math.fsum(col.tolist()) for col in block.T]
    return out


# ---------------------------------------------------------------------------
# Xi-valued measures on X


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Xi-valued measure: cellwise densities plus masses attached to cells.

    Use :meth:`make` to build one; singular entries sharing a cell are summed
    because a cell is the finest addressable location.
    """

    space: SpaceModel
    dim: int
    ac: np.ndarray
    singular_cells: np.ndarray
    singular_mass: np.ndarray

    @classmethod
    def make(cls, space, dim, ac=None, singular=()):
        n = space.ncells
        if ac is None:
            ac = np.zeros((n, dim))
        ac = np.asarray(ac, dtype=float)
        if ac.ndim == 1 and dim == 1:
            ac = ac.reshape(-1, 1)
        if ac.ndim == 1:
            ac = np.broadcast_to(ac, (n, dim))
        ac = np.array(ac, dtype=float)
        if ac.shape != (n, dim):
            raise ValueError(f"ac densities must have shape {(n, dim)}")
        if not np.all(np.isfinite(ac)):
            raise ValueError("ac densities must be finite")
        acc = {}
        for cell, m in singular:
            m = np.atleast_1d(np.asarray(m, dtype=float))
            if m.shape != (dim,) or not np.all(np.isfinite(m)):
                raise ValueError("singular mass has the wrong shape or is not finite")
            if not np.any(m != 0):
                raise ValueError("zero-mass singular entry")
            cell = int(cell)
            if not 0 <= cell < n:
                raise IndexError("singular entry outside the space")
            acc.setdefault(cell, []).append(m)
        cells = np.array(sorted(acc), dtype=np.intp)
        masses = np.array(
            [[math.fsum(col) for col in np.array(acc[c]).T] for c in cells], dtype=float
        ).reshape(-1, dim)
        keep = np.any(masses != 0, axis=1)
        return cls(space, int(dim), ac, cells[keep], masses[keep])

    @classmethod
    def zero(cls, space, dim):
        return cls.make(space, dim)

    def total_variation(self) -> float:
        ac = fsum(self.space.weights * np.linalg.norm(self.ac, axis=1))
        return ac + fsum(np.linalg.norm(self.singular_mass, axis=1))

    def singular_dense(self) -> np.ndarray:
        """Singular masses as an ``(ncells, dim)`` array."""
        out = np.zeros((self.space.ncells, self.dim))
        out[self.singular_cells] = self.singular_mass
        return out

    def cell_totals(self) -> np.ndarray:
        """Total mass per cell, ``lambda(c) ac(c) + singular(c)``."""
        return self.space.weights[:, None] * self.ac + self.singular_dense()

    def allclose(self, other: "DiscreteMeasure", tol: float = 1e-12) -> bool:
        check_same_space(self.space, other.space)
        return (
            self.dim == other.dim
            and np.allclose(self.ac, other.ac, rtol=0, atol=tol)
            and np.allclose(self.singular_dense(), other.singular_dense(), rtol=0, atol=tol)
        )

    def __sub__(self, other):
        check_same_space(self.space, other.space)
        sd = self.singular_dense() - other.singular_dense()
        nz = np.flatnonzero(np.any(sd != 0, axis=1))
        return DiscreteMeasure(self.space, self.dim, self.ac - other.ac, nz, sd[nz])

    def scaled(self, c: float) -> "DiscreteMeasure":
        if c == 0:
            return DiscreteMeasure.zero(self.space, self.dim)
        return DiscreteMeasure(self.space, self.dim, c * self.ac, self.singular_cells, c * self.singular_mass)

    def component(self, sl) -> "DiscreteMeasure":
        sd = self.singular_dense()[:, sl]
        nz = np.flatnonzero(np.any(sd != 0, axis=1))
        return DiscreteMeasure(self.space, sd.shape[1], self.ac[:, sl], nz, sd[nz])


# ---------------------------------------------------------------------------
# generalized Young measures


@dataclass(frozen=True, eq=False)
class DiscreteGYM:
    """Atomic measure on ``X x Xi x R`` with canonical atoms.

    Attributes
    ----------
    space : SpaceModel
    dim : int
        Dimension of Xi.
    cells, xi, eta, w : ndarray
        Atom data; ``xi`` has shape ``(n, dim)``.  Atoms are kept on the unit
        sphere of ``Xi x R`` with all mass in ``w``.

    Use :meth:`from_weighted` to build from arbitrary (non-canonical) atoms.
    """

    space: SpaceModel
    dim: int
    cells: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    w: np.ndarray

    @classmethod
    def from_weighted(cls, space, dim, cells, xi, eta, w, merge=True):
        """Canonicalize atoms ``w * delta_(cell, xi, eta)``.

        Atoms are rescaled to the unit sphere, zero atoms (``xi = 0`` and
        ``eta = 0``) are dropped and coincident atoms are merged by adding
        their homogeneous vectors ``w * (xi, eta)``.
        """
        cells = np.asarray(cells, dtype=np.intp).reshape(-1)
        n = cells.size
        xi = np.asarray(xi, dtype=float).reshape(n, dim)
        eta = np.asarray(eta, dtype=float).reshape(n)
        w = np.asarray(w, dtype=float).reshape(n)
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(eta)) and np.all(np.isfinite(w))):
            raise ValueError("atom data must be finite")
        if np.any(w < 0):
            raise ValueError("atom weights must be nonnegative")
        if n and (cells.min() < 0 or cells.max() >= space.ncells):
            raise IndexError("atom cell outside the space")
        z = np.column_stack([xi, eta])
        r = np.linalg.norm(z, axis=1)
        keep = (r > 0) & (w > 0)
        cells, z, r, w = cells[keep], z[keep], r[keep], w[keep]
        z = z / r[:, None]
        w = w * r
        if merge and cells.size > 1:
            cells, z, w = _merge(cells, z, w)
        return cls(space, int(dim), cells, z[:, :dim].copy(), z[:, dim].copy(), w)

    @classmethod
    def empty(cls, space, dim):
        return cls(space, dim, np.zeros(0, np.intp), np.zeros((0, dim)), np.zeros(0), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return int(self.cells.size)

    def atoms(self):
        for i in range(self.n_atoms):
            yield int(self.cells[i]), self.xi[i].copy(), float(self.eta[i]), float(self.w[i])

    def sorted(self) -> "DiscreteGYM":
        """Copy with atoms in canonical lexicographic order (cell, eta, xi)."""
        keys = [self.xi[:, j] for j in range(self.dim - 1, -1, -1)] + [self.eta, self.cells]
        o = np.lexsort(keys)
        return DiscreteGYM(self.space, self.dim, self.cells[o], self.xi[o], self.eta[o], self.w[o])

    def __add__(self, other: "DiscreteGYM") -> "DiscreteGYM":
        """Sum of measures (not in general a generalized Young measure)."""
        check_same_space(self.space, other.space)
        if self.dim != other.dim:
            raise ValueError("dimension mismatch")
        return DiscreteGYM.from_weighted(
            self.space,
            self.dim,
            np.r_[self.cells, other.cells],
            np.vstack([self.xi, other.xi]),
            np.r_[self.eta, other.eta],
            np.r_[self.w, other.w],
        )

    def scaled(self, c: float) -> "DiscreteGYM":
        return DiscreteGYM(self.space, self.dim, self.cells, self.xi, self.eta, c * self.w)


def _merge(cells, z, w, tol=MERGE_TOL):
    q = np.round(z / (10 * tol))
    keys = [q[:, j] for j in range(q.shape[1] - 1, -1, -1)] + [cells]
    o = np.lexsort(keys)
    cells, z, w = cells[o], z[o], w[o]
    new = np.ones(cells.size, dtype=bool)
    new[1:] = (cells[1:] != cells[:-1]) | (np.linalg.norm(z[1:] - z[:-1], axis=1) > tol)
    if new.all():
        return cells, z, w
    gid = np.cumsum(new) - 1
    ng = int(gid[-1]) + 1
    vec = np.zeros((ng, z.shape[1]))
    np.add.at(vec, gid, w[:, None] * z)
    nw = np.linalg.norm(vec, axis=1)
    return cells[new], vec / nw[:, None], nw


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`.

    ``cell_defects`` holds ``sum w*eta - lambda(c)`` per cell.
    """

    passed: bool
    projection_defect: float
    cell_defects: np.ndarray
    negative_eta: int
    noncanonical: int
    tolerance: float


def validate(mu: DiscreteGYM) -> ValidationReport:
    """Check support, canonical form and the projection property."""
    lam = mu.space.weights
    tol = PROJECTION_TOL * mu.space.total_mass
    mass = _cell_sums(mu.cells, mu.w * mu.eta, mu.space.ncells)
    defects = mass - lam
    neg = int(np.sum(mu.eta < 0))
    norms = np.hypot(np.linalg.norm(mu.xi, axis=1), mu.eta)
    nonc = int(np.sum((np.abs(norms - 1.0) > 1e-12) | (mu.w <= 0)))
    worst = float(np.max(np.abs(defects))) if defects.size else 0.0
    return ValidationReport(worst <= tol and neg == 0 and nonc == 0, worst, defects, neg, nonc, tol)


def _finalize(mu: DiscreteGYM, strict: bool) -> DiscreteGYM:
    """Repair projection defects within tolerance by rescaling eta-carrying atoms."""
    lam = mu.space.weights
    tol = PROJECTION_TOL * mu.space.total_mass
    pos = mu.eta > 0
    mass = _cell_sums(mu.cells[pos], (mu.w * mu.eta)[pos], mu.space.ncells)
    defect = np.abs(mass - lam)
    if np.any(defect > tol) or np.any(mu.eta < 0):
        if strict:
            raise ValueError(f"projection property violated (defect {defect.max():.3e})")
        return mu
    scale = np.ones(mu.space.ncells)
    nz = mass > 0
    scale[nz] = lam[nz] / mass[nz]
    w = np.where(pos, mu.w * scale[mu.cells], mu.w)
    return DiscreteGYM(mu.space, mu.dim, mu.cells, mu.xi, mu.eta, w)


# ---------------------------------------------------------------------------
# lifts


def lift_measure(p: DiscreteMeasure) -> DiscreteGYM:
    """Lift a Xi-valued measure: ``delta_p`` in homogeneous coordinates."""
    lam = p.space.weights
    n = p.space.ncells
    cells = np.r_[np.arange(n), p.singular_cells]
    xi = np.vstack([lam[:, None] * p.ac, p.singular_mass])
    eta = np.r_[lam, np.zeros(p.singular_cells.size)]
    mu = DiscreteGYM.from_weighted(p.space, p.dim, cells, xi, eta, np.ones(cells.size))
    return _finalize(mu, strict=True)


def lift_function(space: SpaceModel, u) -> DiscreteGYM:
    """Lift cellwise values ``u`` (shape ``(ncells, d)`` or ``(ncells,)``)."""
    u = np.asarray(u, dtype=float)
    dim = 1 if u.ndim == 1 else u.shape[1]
    return lift_measure(DiscreteMeasure.make(space, dim, ac=u.reshape(space.ncells, dim)))


@dataclass(frozen=True, eq=False)
class YoungPart:
    """Oscillation part: atoms ``(cell, value, mass)`` with cell masses summing to ``lambda``."""

    space: SpaceModel
    dim: int
    cells: np.ndarray
    values: np.ndarray
    mass: np.ndarray

    @classmethod
    def make(cls, space, dim, cells, values, mass):
        cells = np.asarray(cells, dtype=np.intp).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(cells.size, dim)
        mass = np.asarray(mass, dtype=float).reshape(cells.size)
        if np.any(mass <= 0) or not np.all(np.isfinite(values)):
            raise ValueError("Young atoms need positive masses and finite values")
        return cls(space, int(dim), cells, values, mass)

    @classmethod
    def uniform(cls, space, values, probs):
        """Same probability distribution in every cell: ``sum_j probs[j] delta_values[j]``."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] == 1 and len(probs) > 1:
            values = values.T
        probs = np.asarray(probs, dtype=float)
        n, k = space.ncells, len(probs)
        cells = np.repeat(np.arange(n), k)
        return cls.make(
            space, values.shape[1], cells, np.tile(values, (n, 1)), np.repeat(space.weights, k) * np.tile(probs, n)
        )

    def cell_mass(self) -> np.ndarray:
        return _cell_sums(self.cells, self.mass, self.space.ncells)

    def first_moment(self) -> float:
        return fsum(self.mass * np.linalg.norm(self.values, axis=1))


@dataclass(frozen=True, eq=False)
class VarifoldPart:
    """Concentration part: atoms ``(cell, unit direction, mass)``."""

    space: SpaceModel
    dim: int
    cells: np.ndarray
    directions: np.ndarray
    mass: np.ndarray

    @classmethod
    def make(cls, space, dim, cells, directions, mass):
        cells = np.asarray(cells, dtype=np.intp).reshape(-1)
        d = np.asarray(directions, dtype=float).reshape(cells.size, dim)
        mass = np.asarray(mass, dtype=float).reshape(cells.size)
        if np.any(np.abs(np.linalg.norm(d, axis=1) - 1.0) > 1e-12):
            raise ValueError("varifold directions must be unit vectors")
        if np.any(mass <= 0):
            raise ValueError("varifold masses must be positive")
        return cls(space, int(dim), cells, d, mass)

    @classmethod
    def empty(cls, space, dim):
        return cls(space, dim, np.zeros(0, np.intp), np.zeros((0, dim)), np.zeros(0))

    def total_mass(self) -> float:
        return fsum(self.mass)


def lift_young(nu: YoungPart) -> DiscreteGYM:
    """Embed a Young measure: atom ``(c, xi, m)`` becomes ``m * delta_(c, xi, 1)``."""
    tol = PROJECTION_TOL * nu.space.total_mass
    if np.any(np.abs(nu.cell_mass() - nu.space.weights) > tol):
        raise ValueError("Young masses do not sum to the reference mass in every cell")
    mu = DiscreteGYM.from_weighted(
        nu.space, nu.dim, nu.cells, nu.values, np.ones(nu.cells.size), nu.mass
    )
    return _finalize(mu, strict=True)


# ---------------------------------------------------------------------------
# duality


def _check_dims(f: HomFn, mu: DiscreteGYM):
    if f.dim != mu.dim:
        raise ValueError(f"dimension mismatch: function on Xi^{f.dim}, measure on Xi^{mu.dim}")
    if f.ncells is not None and f.ncells != mu.space.ncells:
        raise ValueError("function's cell fields do not match the space")


def pair(f: HomFn, mu: DiscreteGYM) -> float:
    """Duality pairing ``<f, mu> = sum w f(cell, xi, eta)``; ``+inf`` absorbs."""
    _check_dims(f, mu)
    if mu.n_atoms == 0:
        return 0.0
    vals = f.evaluate(mu.cells, mu.xi, mu.eta)
    bad = np.isnan(vals) | np.isneginf(vals)
    if np.any(bad) or (np.any(np.isposinf(vals)) and not f.may_be_infinite):
        raise ValueError("test function is not finite at an atom")
    return fsum(mu.w * vals) if not np.isposinf(vals).any() else INF


def norm_star(mu: DiscreteGYM) -> float:
    """Dual norm, the total atom mass ``sum w``."""
    return fsum(mu.w)


def image(mu: DiscreteGYM, psi: HomMap) -> DiscreteGYM:
    """Push ``mu`` forward under ``(x, xi, eta) -> (x, phi(x, xi, eta), eta)``."""
    if psi.dim_in != mu.dim:
        raise ValueError("map input dimension does not match the measure")
    phi = psi.apply(mu.cells, mu.xi, mu.eta) if mu.n_atoms else np.zeros((0, psi.dim_out))
    out = DiscreteGYM.from_weighted(mu.space, psi.dim_out, mu.cells, phi, mu.eta, mu.w)
    return _finalize(out, strict=False)


def linear_image(mu: DiscreteGYM, matrix) -> DiscreteGYM:
    """Fast path of :func:`image` for ``phi = matrix @ xi``."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if m.shape[1] != mu.dim:
        raise ValueError("matrix does not match the measure dimension")
    out = DiscreteGYM.from_weighted(mu.space, m.shape[0], mu.cells, mu.xi @ m.T, mu.eta, mu.w)
    return _finalize(out, strict=False)


# ---------------------------------------------------------------------------
# decomposition


def decompose(mu: DiscreteGYM):
    """Split into Young part (``eta > 0`` atoms) and varifold part (``eta = 0``).

    Returns
    -------
    (YoungPart, VarifoldPart)
    """
    if np.any(mu.eta < 0):
        raise ValueError("atoms with negative eta are outside the support")
    pos = mu.eta > 0
    young = YoungPart(
        mu.space, mu.dim, mu.cells[pos], mu.xi[pos] / mu.eta[pos, None], mu.w[pos] * mu.eta[pos]
    )
    zero = ~pos
    nx = np.linalg.norm(mu.xi[zero], axis=1)
    if np.any(nx == 0):
        raise ValueError("concentration atom with zero direction")
    var = VarifoldPart(mu.space, mu.dim, mu.cells[zero], mu.xi[zero] / nx[:, None], mu.w[zero] * nx)
    return young, var


def recompose(young: YoungPart, varifold: VarifoldPart) -> DiscreteGYM:
    """Inverse of :func:`decompose`."""
    check_same_space(young.space, varifold.space)
    space, dim = young.space, young.dim
    cells = np.r_[young.cells, varifold.cells]
    xi = np.vstack([young.values, varifold.directions])
    eta = np.r_[np.ones(young.cells.size), np.zeros(varifold.cells.size)]
    w = np.r_[young.mass, varifold.mass]
    mu = DiscreteGYM.from_weighted(space, dim, cells, xi, eta, w)
    return _finalize(mu, strict=False)


def disintegrate(young: YoungPart) -> list:
    """Per-cell probability distributions ``[(values, probs), ...]``."""
    out = []
    lam = young.space.weights
    for c in range(young.space.ncells):
        sel = young.cells == c
        if not np.any(sel):
            raise ValueError(f"cell {c} carries no Young mass")
        m = young.mass[sel]
        out.append((young.values[sel].copy(), m / lam[c]))
    return out


# ---------------------------------------------------------------------------
# projections and barycentres


def project_X(h, mu: DiscreteGYM) -> DiscreteMeasure:
    """The measure ``pi_X(h mu)`` with cellwise totals ``sum w h(cell, xi, eta)``.

    Contributions of atoms with ``eta > 0`` form the absolutely continuous part
    (divided by ``lambda(c)``); those with ``eta = 0`` are attached to the cell
    as singular masses.  ``h`` is a :class:`HomMap` or a scalar :class:`HomFn`.
    """
    if isinstance(h, HomFn):
        _check_dims(h, mu)
        vals = h.evaluate(mu.cells, mu.xi, mu.eta)[:, None] if mu.n_atoms else np.zeros((0, 1))
        dim = 1
    else:
        if h.dim_in != mu.dim:
            raise ValueError("map input dimension does not match the measure")
        vals = h.apply(mu.cells, mu.xi, mu.eta) if mu.n_atoms else np.zeros((0, h.dim_out))
        dim = h.dim_out
    if not np.all(np.isfinite(vals)):
        raise ValueError("h is not finite at an atom")
    n = mu.space.ncells
    pos = mu.eta > 0
    ac = _cell_sums(mu.cells[pos], mu.w[pos, None] * vals[pos], n).reshape(n, dim)
    ac = ac / mu.space.weights[:, None]
    sing = _cell_sums(mu.cells[~pos], mu.w[~pos, None] * vals[~pos], n).reshape(n, dim)
    nz = np.flatnonzero(np.any(sing != 0, axis=1))
    return DiscreteMeasure(mu.space, dim, ac, nz, sing[nz])


def barycentre(mu: DiscreteGYM) -> DiscreteMeasure:
    """``bar(mu) = pi_X(xi mu)``."""
    return project_X(HomMap.identity(mu.dim), mu)


def jensen_gap(f: HomFn, mu: DiscreteGYM, samples: int = 1000, seed: int = 0) -> float:
    """``<f, mu> - <f, delta_bar(mu)>`` for convex ``f`` (nonnegative up to rounding).

    Raises
    ------
    ValueError
        If sampling finds ``f`` not homogeneous or not subadditive.
    """
    rep = classify(f, samples=samples, seed=seed, ncells=mu.space.ncells)
    if not rep.subadditive:
        raise ValueError("f fails convexity sampling")
    a = pair(f, mu)
    b = pair(f, lift_measure(barycentre(mu)))
    if a == INF:
        return INF
    return a - b


@dataclass(frozen=True)
class ContactReport:
    """Outcome of the contact-set check.

    ``hypothesis`` records whether ``<f, mu> <= <cof, delta_bar> + tol``;
    ``contained`` whether every atom satisfies ``w (f - cof) <= tol``;
    ``witness`` is the index of the worst atom.
    """

    hypothesis: bool
    contained: bool
    excess: float
    worst_slack: float
    witness: int


def contact_report(f: HomFn, cof: HomFn, mu: DiscreteGYM, tol: float, samples: int = 1000, seed: int = 0):
    _check_dims(f, mu)
    _check_dims(cof, mu)
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, mu.space.ncells, samples)
    xi = rng.standard_normal((samples, mu.dim))
    eta = np.abs(rng.standard_normal(samples))
    gap_s = f.evaluate(cells, xi, eta) - cof.evaluate(cells, xi, eta)
    gap_a = f.evaluate(mu.cells, mu.xi, mu.eta) - cof.evaluate(mu.cells, mu.xi, mu.eta)
    if np.any(gap_s < -1e-12) or np.any(gap_a < -1e-12):
        raise ValueError("declared envelope exceeds f")
    excess = pair(f, mu) - pair(cof, lift_measure(barycentre(mu)))
    slack = mu.w * gap_a
    worst = int(np.argmax(slack)) if slack.size else -1
    ws = float(slack[worst]) if slack.size else 0.0
    return ContactReport(excess <= tol, ws <= tol, float(excess), ws, worst)


def contact_support_check(f: HomFn, cof: HomFn, mu: DiscreteGYM, tol: float, strict: bool = False) -> bool:
    """Is every atom of ``mu`` in the contact set ``{f = cof}`` (weighted slack ``<= tol``)?

    ``cof`` is a caller-supplied convex minorant of ``f``.  With
    ``strict=True`` a failure of the hypothesis ``<f, mu> <= <cof, delta_bar(mu)> + tol``
    raises instead of being reported through the return value.
    """
    rep = contact_report(f, cof, mu, tol)
    if strict and not rep.hypothesis:
        raise ValueError(f"hypothesis violated: <f,mu> exceeds <cof,delta_bar> by {rep.excess:.3e}")
    return rep.contained


# ---------------------------------------------------------------------------
# batteries


@dataclass(frozen=True, eq=False)
class Battery:
    """Ordered test functions with ``hom_norm <= 1`` and weights ``2**-i``."""

    members: tuple
    names: tuple = ()

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ValueError("empty battery")
        if len({m.dim for m in members}) != 1:
            raise ValueError("battery members act on different Xi dimensions")
        names = tuple(self.names) or tuple(f"f{i}" for i in range(len(members)))
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "names", names)

    @property
    def dim(self):
        return self.members[0].dim

    @property
    def weights(self) -> np.ndarray:
        return 2.0 ** -np.arange(len(self.members))

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def check(self, ncells: int | None = None, grid_size: int = 360) -> None:
        """Verify homogeneity by sampling and the norm bound on a direction grid."""
        grid = sphere_grid(self.dim + 1, grid_size)
        for name, f in zip(self.names, self.members):
            if classify(f, samples=500, ncells=ncells).homogeneity_defect > 1e-10:
                raise ValueError(f"battery member {name} is not homogeneous")
            if hom_norm(f, grid, ncells) > 1.0 + 1e-12:
                raise ValueError(f"battery member {name} has norm above 1")


def standard_battery(space: SpaceModel, dim: int, size: int = 20) -> Battery:
    """Deterministic battery of ``size`` members mixing norms, linear forms and kinks.

    Cell dependence enters through smooth profiles of the cell centres rescaled
    to ``[-1, 1]``.  Every member has norm at most 1 on the unit sphere of
    ``(xi, eta)`` by construction (coefficient vectors of length <= 1).
    """
    c = np.asarray(space.centers, dtype=float)
    lo, hi = float(c.min()), float(c.max())
    s = (2.0 * (c - lo) / (hi - lo) - 1.0) if hi > lo else np.zeros_like(c)
    n = space.ncells
    eye = np.eye(dim)
    e = [eye[i % dim] for i in range(max(dim, 3))]
    cos1, sin1 = np.cos(np.pi * s / 2), np.sin(np.pi * s)
    cand = [
        ("euclid", EuclidNorm(dim)),
        ("eta", EtaPart(dim)),
        ("xinorm", XiNorm(dim)),
        ("pos_e1", PositivePart(Linear(e[0], 0.0))),
        ("neg_e1", PositivePart(Linear(-e[0], 0.0))),
        ("lin_cos", Linear(cos1[:, None] * e[0], np.zeros(n))),
        ("eta_s", Linear(np.zeros((n, dim)), s)),
        ("lin_sin", Linear(sin1[:, None] * e[1], np.zeros(n))),
        ("pos_mix", PositivePart(Linear(0.6 * e[0], 0.8 * s))),
        ("max_lin", Max(Linear(0.6 * e[0], 0.3), Linear(-0.6 * e[0], 0.3))),
        ("min_norm_eta", Min(XiNorm(dim), EtaPart(dim))),
        ("half_sum", 0.5 * (EuclidNorm(dim) + Linear(e[0], 0.0))),
        ("pos_cos_sin", PositivePart(Linear(cos1[:, None] * e[0] * 0.7, 0.7 * sin1))),
        ("pos_e2_eta", PositivePart(Linear(0.7 * e[1], -0.7))),
        ("lin_s2", Linear((s * s)[:, None] * e[0], np.zeros(n))),
        ("min_norm_eta_s", Min(XiNorm(dim), Linear(np.zeros((n, dim)), 0.25 * (2.0 + s)))),
        ("pos_neg_mix", PositivePart(Linear(-0.5 * e[0] + 0.5 * e[1], 0.5 * cos1))),
        ("lin_e3", Linear(e[2], 0.0)),
        ("max_e1_e2", Max(Linear(0.7 * e[0], 0.0), Linear(0.7 * e[1], 0.0))),
        ("lin_cos3", Linear(0.8 * np.cos(3 * np.pi * s / 2)[:, None] * e[0], 0.6 * np.sin(np.pi * s / 2))),
    ]
    if size > len(cand):
        rng = np.random.default_rng(7)
        for i in range(size - len(cand)):
            a, b = rng.standard_normal(dim), float(rng.standard_normal())
            r = math.sqrt(float(a @ a) + b * b)
            cand.append((f"rand_pos_{i}", PositivePart(Linear(a / r, b / r))))
    chosen = cand[:size]
    return Battery(tuple(f for _, f in chosen), tuple(name for name, _ in chosen))


def pair_battery(battery: Battery, mu: DiscreteGYM) -> np.ndarray:
    return np.array([pair(f, mu) for f in battery.members])


def wstar_gap(mu1: DiscreteGYM, mu2: DiscreteGYM, battery: Battery) -> float:
    """Weighted battery distance ``sum_i 2**-i |<f_i, mu1> - <f_i, mu2>|``."""
    if len(battery) == 0:
        raise ValueError("empty battery")
    d = np.abs(pair_battery(battery, mu1) - pair_battery(battery, mu2))
    return fsum(battery.weights * d)

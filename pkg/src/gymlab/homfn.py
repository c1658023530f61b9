"""Positively one-homogeneous test functions on X x Xi x R.

Test functions are immutable combinator trees.  Every combinator except
:class:`RawCallback` is homogeneous by construction, so ``f(x, t*xi, t*eta) ==
t * f(x, xi, eta)`` for ``t >= 0`` up to rounding.  Evaluation is vectorized:
``f.evaluate(cells, xi, eta)`` takes an ``(n,)`` integer array of cells, an
``(n, d)`` array of state vectors and an ``(n,)`` array of homogeneous weights.

The value ``+inf`` (``math.inf``) is the sentinel for lower-semicontinuous
functions such as :class:`PrMoment`; it is absorbing in pairings and compares
above all reals.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "INF",
    "HomFn",
    "Linear",
    "EuclidNorm",
    "XiNorm",
    "EtaPart",
    "PositivePart",
    "Min",
    "Max",
    "Combination",
    "ComposeHomMap",
    "PrMoment",
    "SphereProfile",
    "EtaGate",
    "RawCallback",
    "MoreauYosida",
    "HomMap",
    "DirectionGrid",
    "sphere_grid",
    "evaluate",
    "hom_norm",
    "moreau_yosida",
    "ConvexSplit",
    "convex_split",
    "ClassReport",
    "classify",
    "psi0",
]

INF = math.inf


def _batch(dim, cells, xi, eta):
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        xi = xi.reshape(1, 1)
    elif xi.ndim == 1:
        xi = xi.reshape(-1, 1) if dim == 1 and xi.shape[0] == eta.shape[0] else xi.reshape(1, -1)
    if xi.shape[1] != dim:
        raise ValueError(f"dimension mismatch: function on Xi of dim {dim}, got {xi.shape[1]}")
    n = max(xi.shape[0], eta.shape[0])
    cells = np.broadcast_to(np.asarray(cells, dtype=np.intp), (n,))
    xi = np.broadcast_to(xi, (n, dim))
    eta = np.broadcast_to(eta, (n,))
    return cells, xi, eta


def _cells_of(*fns):
    sizes = {f.ncells for f in fns if f.ncells is not None}
    if len(sizes) > 1:
        raise ValueError(f"cell-indexed fields of different lengths: {sorted(sizes)}")
    return sizes.pop() if sizes else None


class HomFn:
    """Base class of the combinator algebra.

    Subclasses implement ``_eval``.  ``dim`` is the dimension of Xi and
    ``ncells`` the length of any cell-indexed field in the tree (``None`` if
    the function does not depend on the cell).
    """

    dim: int

    @property
    def ncells(self):
        return None

    @property
    def children(self) -> tuple:
        return ()

    # -- evaluation ------------------------------------------------------
    def evaluate(self, cells, xi, eta) -> np.ndarray:
        """Vectorized evaluation; returns an ``(n,)`` float array."""
        cells, xi, eta = _batch(self.dim, cells, xi, eta)
        n = self.ncells
        if n is not None and cells.size and (cells.min() < 0 or cells.max() >= n):
            raise IndexError("cell index outside the function's cell-indexed fields")
        return self._eval(cells, xi, eta)

    def __call__(self, cell, xi, eta) -> float:
        xi = np.atleast_1d(np.asarray(xi, dtype=float)).reshape(1, -1)
        return float(self.evaluate(np.array([cell]), xi, np.array([float(eta)]))[0])

    def _eval(self, cells, xi, eta):
        raise NotImplementedError

    # -- structure -------------------------------------------------------
    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    @property
    def verified(self) -> bool:
        """False when the tree contains an unverified callback."""
        return not any(isinstance(node, RawCallback) for node in self.walk())

    @property
    def may_be_infinite(self) -> bool:
        return any(isinstance(node, PrMoment) for node in self.walk())

    def bounds(self):
        """Declared growth constants ``(a, b)`` with ``|f| <= a|xi| + b(x)|eta|``.

        ``b`` is a float or a cell-indexed array.
        """
        raise NotImplementedError

    # -- arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return Combination(((1.0, self), (1.0, other)))

    def __sub__(self, other):
        return Combination(((1.0, self), (-1.0, other)))

    def __neg__(self):
        return Combination(((-1.0, self),))

    def __mul__(self, c):
        return Combination(((float(c), self),))

    __rmul__ = __mul__


def _cellwise(arr, cells):
    return arr if np.ndim(arr) == 0 else arr[cells]


@dataclass(frozen=True, eq=False)
class Linear(HomFn):
    """``a(x).xi + b(x) eta`` with constant or cell-indexed coefficients.

    ``a`` has shape ``(d,)`` or ``(ncells, d)``; ``b`` is a scalar or has shape
    ``(ncells,)``.
    """

    a: np.ndarray
    b: object = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float)
        if a.ndim > 2 or b.ndim > 1:
            raise ValueError("Linear coefficients have too many axes")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("Linear coefficients must be finite")
        if a.ndim == 2 and b.ndim == 1 and a.shape[0] != b.shape[0]:
            raise ValueError("a and b cell-indexed with different lengths")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b if b.ndim else float(b))

    @property
    def dim(self):
        return int(self.a.shape[-1])

    @property
    def ncells(self):
        if self.a.ndim == 2:
            return int(self.a.shape[0])
        if np.ndim(self.b) == 1:
            return int(self.b.shape[0])
        return None

    def _eval(self, cells, xi, eta):
        a = self.a if self.a.ndim == 1 else self.a[cells]
        return np.einsum("ij,ij->i", np.broadcast_to(a, xi.shape), xi) + _cellwise(self.b, cells) * eta

    def bounds(self):
        a = float(np.max(np.linalg.norm(np.atleast_2d(self.a), axis=1)))
        return a, np.abs(self.b)


@dataclass(frozen=True, eq=False)
class EuclidNorm(HomFn):
    """``|(xi, eta)|``."""

    dim: int

    def _eval(self, cells, xi, eta):
        return np.hypot(np.linalg.norm(xi, axis=1), eta)

    def bounds(self):
        return 1.0, 1.0


@dataclass(frozen=True, eq=False)
class XiNorm(HomFn):
    """``|xi|``."""

    dim: int

    def _eval(self, cells, xi, eta):
        return np.abs(xi[:, 0]) if self.dim == 1 else np.linalg.norm(xi, axis=1)

    def bounds(self):
        return 1.0, 0.0


@dataclass(frozen=True, eq=False)
class EtaPart(HomFn):
    """``eta``."""

    dim: int

    def _eval(self, cells, xi, eta):
        return np.array(eta, dtype=float, copy=True)

    def bounds(self):
        return 0.0, 1.0


@dataclass(frozen=True, eq=False)
class PositivePart(HomFn):
    inner: HomFn

    @property
    def dim(self):
        return self.inner.dim

    @property
    def ncells(self):
        return self.inner.ncells

    @property
    def children(self):
        return (self.inner,)

    def _eval(self, cells, xi, eta):
        return np.maximum(self.inner._eval(cells, xi, eta), 0.0)

    def bounds(self):
        return self.inner.bounds()


@dataclass(frozen=True, eq=False)
class _Binary(HomFn):
    left: HomFn
    right: HomFn

    def __post_init__(self):
        if self.left.dim != self.right.dim:
            raise ValueError("operands act on different Xi dimensions")
        _cells_of(self.left, self.right)

    @property
    def dim(self):
        return self.left.dim

    @property
    def ncells(self):
        return _cells_of(self.left, self.right)

    @property
    def children(self):
        return (self.left, self.right)

    def bounds(self):
        a1, b1 = self.left.bounds()
        a2, b2 = self.right.bounds()
        return max(a1, a2), np.maximum(b1, b2)


class Min(_Binary):
    def _eval(self, cells, xi, eta):
        return np.minimum(self.left._eval(cells, xi, eta), self.right._eval(cells, xi, eta))


class Max(_Binary):
    def _eval(self, cells, xi, eta):
        return np.maximum(self.left._eval(cells, xi, eta), self.right._eval(cells, xi, eta))


@dataclass(frozen=True, eq=False)
class Combination(HomFn):
    """Finite linear combination ``sum_i c_i f_i``.

    Coefficients may be negative so that differences such as the convex split
    ``c|xi| - f`` remain trees; ``nonnegative`` tells whether the combination is
    a conic one.
    """

    terms: tuple

    def __post_init__(self):
        terms = tuple((float(c), f) for c, f in self.terms)
        if not terms:
            raise ValueError("empty combination")
        if any(not math.isfinite(c) for c, _ in terms):
            raise ValueError("coefficients must be finite")
        if len({f.dim for _, f in terms}) != 1:
            raise ValueError("terms act on different Xi dimensions")
        _cells_of(*(f for _, f in terms))
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self):
        return self.terms[0][1].dim

    @property
    def ncells(self):
        return _cells_of(*(f for _, f in self.terms))

    @property
    def children(self):
        return tuple(f for _, f in self.terms)

    @property
    def nonnegative(self) -> bool:
        return all(c >= 0 for c, _ in self.terms)

    def _eval(self, cells, xi, eta):
        out = np.zeros(cells.shape[0])
        for c, f in self.terms:
            if c != 0.0:
                out = out + c * f._eval(cells, xi, eta)
        return out

    def bounds(self):
        a, b = 0.0, 0.0
        for c, f in self.terms:
            fa, fb = f.bounds()
            a, b = a + abs(c) * fa, b + abs(c) * np.asarray(fb)
        return a, b


@dataclass(frozen=True, eq=False)
class PrMoment(HomFn):
    """Moment function ``|xi|^r / eta^(r-1)`` for ``eta > 0``, ``+inf`` otherwise.

    The origin ``(0, 0)`` evaluates to 0.
    """

    r: float
    dim: int

    def __post_init__(self):
        if not self.r > 1:
            raise ValueError("PrMoment needs r > 1")

    def _eval(self, cells, xi, eta):
        nx = np.linalg.norm(xi, axis=1)
        out = np.full(nx.shape, INF)
        pos = eta > 0
        out[pos] = nx[pos] ** self.r / eta[pos] ** (self.r - 1.0)
        out[(~pos) & (nx == 0) & (eta == 0)] = 0.0
        return out

    def bounds(self):
        return INF, INF


@dataclass(frozen=True, eq=False)
class SphereProfile(HomFn):
    """``|xi| g(xi/|xi|)`` for a bounded profile ``g`` on the unit sphere of Xi.

    ``g`` maps an ``(n, d)`` array of unit vectors to ``(n,)`` values and
    ``bound`` declares ``sup |g|``.  Homogeneous by construction; the value at
    ``xi = 0`` is 0.
    """

    g: Callable
    dim: int
    bound: float = 1.0

    def _eval(self, cells, xi, eta):
        nx = np.linalg.norm(xi, axis=1)
        out = np.zeros(nx.shape)
        nz = nx > 0
        if np.any(nz):
            vals = np.asarray(self.g(xi[nz] / nx[nz, None]), dtype=float)
            if not np.all(np.isfinite(vals)):
                raise ValueError("sphere profile returned non-finite values")
            out[nz] = nx[nz] * vals
        return out

    def bounds(self):
        return float(self.bound), 0.0


@dataclass(frozen=True, eq=False)
class EtaGate(HomFn):
    """``f`` where ``eta != 0`` and 0 on the hyperplane ``eta = 0``.

    Borel but not continuous; used to send concentration atoms to the origin.
    """

    inner: HomFn

    @property
    def dim(self):
        return self.inner.dim

    @property
    def ncells(self):
        return self.inner.ncells

    @property
    def children(self):
        return (self.inner,)

    def _eval(self, cells, xi, eta):
        return np.where(eta != 0, self.inner._eval(cells, xi, eta), 0.0)

    def bounds(self):
        return self.inner.bounds()


@dataclass(frozen=True, eq=False)
class RawCallback(HomFn):
    """Escape hatch: an arbitrary vectorized evaluator ``fn(cells, xi, eta)``.

    Homogeneity is *not* guaranteed; run :func:`classify` before relying on it.
    """

    fn: Callable
    dim: int
    a: float
    b: object = 0.0

    def _eval(self, cells, xi, eta):
        out = np.asarray(self.fn(cells, xi, eta), dtype=float).reshape(-1)
        if out.shape[0] != cells.shape[0] or not np.all(np.isfinite(out)):
            raise ValueError("raw callback returned non-finite or misshaped output")
        return out

    def bounds(self):
        return float(self.a), self.b


# ---------------------------------------------------------------------------
# homogeneous maps


@dataclass(frozen=True, eq=False)
class HomMap:
    """Map ``(x, xi, eta) -> (x, phi(x, xi, eta), eta)`` with homogeneous ``phi``.

    ``phi`` is either a tuple of scalar :class:`HomFn` components or, for the
    common linear case, a matrix (``phi = M @ xi``).
    """

    dim_in: int
    components: tuple = ()
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.matrix is not None:
            m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
            if m.shape[1] != self.dim_in:
                raise ValueError("matrix columns must match the input dimension")
            object.__setattr__(self, "matrix", m)
        else:
            comps = tuple(self.components)
            if not comps:
                raise ValueError("HomMap needs components or a matrix")
            if any(c.dim != self.dim_in for c in comps):
                raise ValueError("component acts on the wrong input dimension")
            object.__setattr__(self, "components", comps)

    @property
    def dim_out(self) -> int:
        return self.matrix.shape[0] if self.matrix is not None else len(self.components)

    @classmethod
    def linear(cls, matrix):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(dim_in=m.shape[1], matrix=m)

    @classmethod
    def identity(cls, dim):
        return cls.linear(np.eye(dim))

    def as_components(self) -> tuple:
        if self.matrix is None:
            return self.components
        return tuple(Linear(row, 0.0) for row in self.matrix)

    def apply(self, cells, xi, eta) -> np.ndarray:
        cells, xi, eta = _batch(self.dim_in, cells, xi, eta)
        if self.matrix is not None:
            return xi @ self.matrix.T
        return np.column_stack([c._eval(cells, xi, eta) for c in self.components])


def psi0(dim: int) -> HomMap:
    """The map keeping ``xi`` where ``eta != 0`` and sending ``eta = 0`` atoms to 0."""
    eye = np.eye(dim)
    return HomMap(dim_in=dim, components=tuple(EtaGate(Linear(eye[i], 0.0)) for i in range(dim)))


@dataclass(frozen=True, eq=False)
class ComposeHomMap(HomFn):
    """``f(x, phi(x, xi, eta), eta)``."""

    inner: HomFn
    psi: HomMap

    def __post_init__(self):
        if self.inner.dim != self.psi.dim_out:
            raise ValueError("map output dimension does not match the function")

    @property
    def dim(self):
        return self.psi.dim_in

    @property
    def ncells(self):
        return _cells_of(self.inner, *self.psi.components)

    @property
    def children(self):
        return (self.inner,) + tuple(self.psi.components)

    def _eval(self, cells, xi, eta):
        return self.inner._eval(cells, self.psi.apply(cells, xi, eta), eta)

    def bounds(self):
        fa, fb = self.inner.bounds()
        if self.psi.matrix is not None:
            pa, pb = float(np.linalg.norm(self.psi.matrix, 2)), 0.0
        else:
            ab = [c.bounds() for c in self.psi.components]
            pa = math.sqrt(sum(a * a for a, _ in ab))
            pb = np.sqrt(sum(np.asarray(b) ** 2 for _, b in ab))
        return fa * pa, fa * pb + fb


def evaluate(f: HomFn, x: int, xi, eta: float) -> float:
    """Evaluate ``f`` at a single point ``(x, xi, eta)``."""
    return f(x, xi, eta)


# ---------------------------------------------------------------------------
# direction grids


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Finite set of unit vectors with a declared covering radius (radians)."""

    vectors: np.ndarray
    covering_radius: float

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if v.shape[0] == 0:
            raise ValueError("empty direction grid")
        if np.any(np.abs(np.linalg.norm(v, axis=1) - 1.0) > 1e-12):
            raise ValueError("grid vectors must have unit norm")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self):
        return int(self.vectors.shape[0])


def _estimate_covering(vectors, probes=20000, seed=12345):
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((probes, vectors.shape[1]))
    p /= np.linalg.norm(p, axis=1, keepdims=True)
    best = np.max(p @ vectors.T, axis=1)
    return float(np.arccos(np.clip(best.min(), -1.0, 1.0)))


@lru_cache(maxsize=64)
def sphere_grid(dim: int, n: int = 720, seed: int = 0) -> DirectionGrid:
    """Direction grid on the unit sphere of R^dim.

    ``dim == 1`` gives ``{+1, -1}``; ``dim == 2`` gives ``n`` equally spaced
    angles (covering radius ``pi/n``); ``dim == 3`` uses a Fibonacci lattice;
    higher dimensions use seeded Gaussian directions plus the coordinate axes.
    Covering radii in dimension >= 3 are estimated by random probing.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    if dim == 1:
        return DirectionGrid(np.array([[1.0], [-1.0]]), 0.0)
    if dim == 2:
        th = 2.0 * np.pi * np.arange(n) / n
        v = np.column_stack([np.cos(th), np.sin(th)])
        return DirectionGrid(v / np.linalg.norm(v, axis=1, keepdims=True), math.pi / n)
    if dim == 3:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + math.sqrt(5.0)) * i
        v = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((n, dim))
    v = np.vstack([v, np.eye(dim), -np.eye(dim)])
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return DirectionGrid(v, _estimate_covering(v))


def _cell_range(f: HomFn, ncells=None):
    n = f.ncells if f.ncells is not None else (ncells or 1)
    return np.arange(n)


def hom_norm(f: HomFn, grid: DirectionGrid, ncells: int | None = None) -> float:
    """Maximum of ``|f|`` over all cells and grid directions of (xi, eta)-space.

    This is a lower bound for the supremum over the sphere; the error is at
    most the covering radius times a Lipschitz constant of ``f``.
    """
    if grid.dim != f.dim + 1:
        raise ValueError("grid must live on the sphere of (xi, eta)-space")
    cells = _cell_range(f, ncells)
    m = len(grid)
    cc = np.repeat(cells, m)
    z = np.tile(grid.vectors, (cells.size, 1))
    vals = f.evaluate(cc, z[:, :-1], z[:, -1])
    if not np.all(np.isfinite(vals)):
        raise ValueError("function is not finite on the grid")
    return float(np.max(np.abs(vals))) if vals.size else 0.0


# ---------------------------------------------------------------------------
# Moreau-Yosida regularization


def _perp_distance(z, c, e):
    """``|z - c e|`` for all query/direction pairs, computed without cancellation."""
    if z.shape[1] == 1:
        return np.zeros_like(c)
    if z.shape[1] == 2:
        return np.abs(z[:, 0, None] * e[None, :, 1] - z[:, 1, None] * e[None, :, 0])
    return np.linalg.norm(z[:, None, :] - c[:, :, None] * e[None, :, :], axis=2)


@dataclass(frozen=True, eq=False)
class MoreauYosida(HomFn):
    """Discrete envelope ``min over rays r e of  f(r e) + k |r e - z|``.

    For each grid direction ``e`` the radial minimization is convex in ``r``
    and is solved in closed form, so the search is exact along every ray and
    invariant under scaling of the query.  ``z = xi`` (``joint=False``, for
    functions independent of eta) or ``z = (xi, eta)`` (``joint=True``).
    """

    inner: HomFn
    k: float
    grid: DirectionGrid
    joint: bool = False
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        f, k, E = self.inner, float(self.k), self.grid.vectors
        want = f.dim + 1 if self.joint else f.dim
        if self.grid.dim != want:
            raise ValueError(f"search grid must live in dimension {want}")
        cells = _cell_range(f)
        m = E.shape[0]
        cc = np.repeat(cells, m)
        z = np.tile(E, (cells.size, 1))
        if self.joint:
            vals = f.evaluate(cc, z[:, :-1], z[:, -1])
        else:
            vals = f.evaluate(cc, z, np.zeros(z.shape[0]))
            other = f.evaluate(cc, z, np.ones(z.shape[0]))
            if not np.allclose(vals, other, rtol=0, atol=1e-12):
                raise ValueError("xi-only regularization needs a function independent of eta; use joint=True")
        if not np.all(np.isfinite(vals)):
            raise ValueError("function is not finite on the search grid")
        alpha = vals.reshape(cells.size, m)
        if not k > np.max(np.abs(alpha)):
            raise ValueError("k must exceed the norm of f on the search grid")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self):
        return self.inner.dim

    @property
    def ncells(self):
        return self.inner.ncells

    @property
    def children(self):
        return (self.inner,)

    def bounds(self):
        a, b = self.inner.bounds()
        return max(a, self.k), b

    def _eval(self, cells, xi, eta):
        z = np.column_stack([xi, eta]) if self.joint else xi
        E, k = self.grid.vectors, self.k
        out = np.empty(z.shape[0])
        chunk = max(1, 2_000_000 // (E.shape[0] * z.shape[1]))
        for s in range(0, z.shape[0], chunk):
            zz = z[s : s + chunk]
            al = self.alpha[cells[s : s + chunk] if self.alpha.shape[0] > 1 else np.zeros(zz.shape[0], int)]
            c = zz @ E.T
            dp = _perp_distance(zz, c, E)
            beta = al / k
            root = np.sqrt(1.0 - beta * beta)
            inside = c - beta * dp / root >= 0.0
            vals = np.where(inside, al * c + k * dp * root, k * np.linalg.norm(zz, axis=1)[:, None])
            out[s : s + chunk] = vals.min(axis=1)
        return out


def moreau_yosida(f: HomFn, k: float, search: DirectionGrid, joint: bool = False) -> MoreauYosida:
    """Return the Moreau-Yosida envelope of ``f`` with slope ``k`` on ``search``.

    Raises
    ------
    ValueError
        If ``k`` does not exceed ``max |f|`` on the search grid, since then the
        minimum is unbounded along some ray.
    """
    return MoreauYosida(f, k, search, joint)


# ---------------------------------------------------------------------------
# convex splitting


@dataclass(frozen=True, eq=False)
class ConvexSplit:
    """Result of :func:`convex_split`: ``f = f1 - f2`` with ``f1, f2`` subadditive."""

    c: float
    f1: HomFn
    f2: HomFn
    max_curvature: float
    min_eigenvalue: float
    noise_floor: float

    def recombined(self) -> HomFn:
        return Combination(((1.0, self.f1), (-1.0, self.f2)))


def _tangent_bases(E):
    D = E.shape[1]
    out = np.empty((E.shape[0], D, D - 1))
    for i, e in enumerate(E):
        q, _ = np.linalg.qr(np.column_stack([e, np.eye(D)]))
        out[i] = q[:, 1:D]
    return out


def _tangent_hessians(f, cells, E, T, h):
    """Central second differences of ``f`` at each ``(cell, e)`` along tangent bases."""
    D1 = T.shape[2]
    pts, idx = [], []
    pts.append(E)
    for i in range(D1):
        pts.append(E + h * T[:, :, i])
        pts.append(E - h * T[:, :, i])
    for i in range(D1):
        for j in range(i + 1, D1):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                pts.append(E + si * h * T[:, :, i] + sj * h * T[:, :, j])
    P = np.stack(pts)  # (npts, m, D)
    npts, m = P.shape[0], P.shape[1]
    H = np.empty((cells.size, m, D1, D1))
    fmax = 0.0
    for ci, c in enumerate(cells):
        v = f.evaluate(np.full(npts * m, c), P.reshape(-1, P.shape[2]), np.zeros(npts * m)).reshape(npts, m)
        fmax = max(fmax, float(np.max(np.abs(v))))
        f0 = v[0]
        for i in range(D1):
            H[ci, :, i, i] = (v[1 + 2 * i] - 2.0 * f0 + v[2 + 2 * i]) / (h * h)
        k = 1 + 2 * D1
        for i in range(D1):
            for j in range(i + 1, D1):
                pp, pm, mp, mm = v[k], v[k + 1], v[k + 2], v[k + 3]
                H[ci, :, i, j] = H[ci, :, j, i] = (pp - pm - mp + mm) / (4.0 * h * h)
                k += 4
    return H, fmax


def convex_split(f: HomFn, sphere: DirectionGrid, step: float = 1e-4, margin: float = 0.05) -> ConvexSplit:
    """Write ``f = c|xi| - (c|xi| - f)`` with both parts subadditive in ``xi``.

    ``f`` must not depend on ``eta``.  The constant ``c`` is the largest
    eigenvalue of the tangential Hessian of ``f`` over the cells and the sphere
    grid, inflated by ``margin``.  Curvatures below the finite-difference noise
    floor ``64 eps max|f| / step**2`` are treated as zero.

    Raises
    ------
    ValueError
        If the second differences at ``step`` and ``2*step`` disagree, which
        indicates that ``f`` is not twice differentiable on the sphere.
    """
    if sphere.dim != f.dim:
        raise ValueError("sphere grid must live in Xi")
    if f.dim == 1:
        # the sphere of R is two points: no tangent directions, hence no curvature
        c, lam, floor, min_eig = 0.0, 0.0, 0.0, 0.0
    else:
        cells = _cell_range(f)
        E = sphere.vectors
        T = _tangent_bases(E)
        H1, fmax = _tangent_hessians(f, cells, E, T, step)
        H2, _ = _tangent_hessians(f, cells, E, T, 2 * step)
        if not (np.all(np.isfinite(H1)) and np.all(np.isfinite(H2))):
            raise ValueError("second differences are not finite")
        ev1 = np.linalg.eigvalsh(H1)
        ev2 = np.linalg.eigvalsh(H2)
        floor = 64.0 * np.finfo(float).eps * max(fmax, 1e-300) / step**2
        if np.any(np.abs(ev1 - ev2) > 1e-3 * (1.0 + np.abs(ev1)) + 4 * floor):
            raise ValueError("second differences diverge: f is not C2 on the sphere grid")
        lam = float(ev1.max())
        c = (1.0 + margin) * lam if lam > floor else 0.0
        min_eig = float((c - ev1.max(axis=-1)).min())
    f1 = Combination(((c, XiNorm(f.dim)),))
    f2 = Combination(((c, XiNorm(f.dim)), (-1.0, f)))
    return ConvexSplit(c, f1, f2, lam, min_eig, floor)


# ---------------------------------------------------------------------------
# classification by sampling


@dataclass(frozen=True)
class ClassReport:
    """Sampled diagnostics of a test function.

    ``homogeneity_defect`` is ``max |f(t z) - t f(z)| / ((1+t)(|xi|+|eta|))``;
    ``lipschitz`` the largest observed ``|f(xi1) - f(xi2)| / |xi1 - xi2|`` at
    fixed ``(x, eta)``; ``triangle_defect`` the largest
    ``f(z1 + z2) - f(z1) - f(z2)`` over ``z = (xi, eta)`` with ``eta >= 0``.
    """

    homogeneity_defect: float
    lipschitz: float
    triangle_defect: float
    samples: int
    seed: int
    verified: bool

    @property
    def homogeneous(self) -> bool:
        return self.homogeneity_defect <= 1e-10

    @property
    def subadditive(self) -> bool:
        return self.homogeneous and self.triangle_defect <= 1e-10


def _sample_points(rng, n, dim):
    scale = 10.0 ** rng.uniform(-2, 2, size=(n, 1))
    xi = rng.standard_normal((n, dim)) * scale
    eta = rng.standard_normal(n) * scale[:, 0]
    return xi, eta


def classify(f: HomFn, samples: int = 2000, seed: int = 0, ncells: int | None = None) -> ClassReport:
    """Estimate homogeneity, Lipschitz and triangle-inequality behaviour of ``f``."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    ncell = f.ncells if f.ncells is not None else (ncells or 1)
    d = f.dim
    cells = rng.integers(0, ncell, size=samples)

    xi, eta = _sample_points(rng, samples, d)
    t = rng.uniform(0.0, 10.0, size=samples)
    t[: max(1, samples // 20)] = 0.0
    with np.errstate(invalid="ignore"):
        lhs = f.evaluate(cells, t[:, None] * xi, t * eta)
        rhs = t * f.evaluate(cells, xi, eta)
        both_inf = np.isinf(lhs) & np.isinf(rhs) & (np.sign(lhs) == np.sign(rhs))
        diff = np.where(both_inf, 0.0, np.abs(lhs - rhs))
    diff = np.nan_to_num(diff, nan=INF)
    scale = (1.0 + t) * (np.linalg.norm(xi, axis=1) + np.abs(eta))
    hom = float(np.max(diff / scale))

    xi1, eta1 = _sample_points(rng, samples, d)
    delta = 10.0 ** rng.uniform(-3, 0, size=(samples, 1)) * np.linalg.norm(xi1, axis=1, keepdims=True)
    xi2 = xi1 + delta * rng.standard_normal((samples, d))
    with np.errstate(invalid="ignore"):
        num = np.abs(f.evaluate(cells, xi1, eta1) - f.evaluate(cells, xi2, eta1))
    den = np.linalg.norm(xi1 - xi2, axis=1)
    ok = den > 0
    num = np.nan_to_num(num, nan=INF)
    lip = float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0

    xa, ea = _sample_points(rng, samples, d)
    xb, eb = _sample_points(rng, samples, d)
    ea, eb = np.abs(ea), np.abs(eb)
    with np.errstate(invalid="ignore"):
        tri = f.evaluate(cells, xa + xb, ea + eb) - f.evaluate(cells, xa, ea) - f.evaluate(cells, xb, eb)
    tri = np.nan_to_num(tri, nan=INF)
    scale = np.linalg.norm(xa, axis=1) + np.linalg.norm(xb, axis=1) + ea + eb
    tri_def = float(max(0.0, np.max(tri / scale)))
    return ClassReport(hom, lip, tri_def, samples, seed, f.verified)

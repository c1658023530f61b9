"""Seeded random objects for tests, experiments and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .gym import DiscreteGYM, DiscreteMeasure, _finalize
from .homfn import EtaPart, EuclidNorm, HomFn, Linear, Max, PositivePart, XiNorm
from .space import Interval
from .systems import SystemGYM, TimeGrid

__all__ = ["random_space", "random_measure", "random_gym", "random_system", "random_convex"]


def random_space(rng: np.random.Generator, max_cells: int = 16) -> Interval:
    lo = float(rng.uniform(-1.0, 0.0))
    return Interval(lo, lo + float(rng.uniform(0.5, 2.0)), int(rng.integers(1, max_cells + 1)))


def random_measure(rng: np.random.Generator, space=None, dim: int | None = None, max_singular: int = 5) -> DiscreteMeasure:
    """Random densities plus up to ``max_singular`` point masses (some may share a cell)."""
    space = random_space(rng) if space is None else space
    dim = int(rng.integers(1, 4)) if dim is None else dim
    ac = rng.standard_normal((space.ncells, dim)) * rng.uniform(0.1, 3.0)
    ns = int(rng.integers(0, max_singular + 1))
    sing = [(int(rng.integers(0, space.ncells)), rng.standard_normal(dim) * rng.uniform(0.1, 2.0)) for _ in range(ns)]
    return DiscreteMeasure.make(space, dim, ac, sing)


def _random_master(rng, space, dim, max_atoms):
    n = space.ncells
    per = max(1, max_atoms // n)
    cells, xi, eta, w = [], [], [], []
    for c in range(n):
        k = int(rng.integers(1, per + 1))
        m = rng.dirichlet(np.ones(k)) * space.weights[c]
        vals = rng.standard_normal((k, dim)) * rng.uniform(0.2, 3.0)
        cells += [c] * k
        xi.append(vals)
        eta += [1.0] * k
        w.append(m)
        if rng.random() < 0.4:
            j = int(rng.integers(1, 3))
            d = rng.standard_normal((j, dim))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            cells += [c] * j
            xi.append(d)
            eta += [0.0] * j
            w.append(rng.uniform(0.05, 1.5, j))
    mu = DiscreteGYM.from_weighted(space, dim, np.array(cells), np.vstack(xi), np.array(eta), np.concatenate(w))
    return _finalize(mu, strict=True)


def random_gym(rng: np.random.Generator, space=None, dim: int | None = None, max_atoms: int = 64) -> DiscreteGYM:
    """Valid random measure: per-cell Young atoms (masses summing to the cell mass) plus occasional concentration atoms."""
    space = random_space(rng, 8) if space is None else space
    dim = int(rng.integers(1, 4)) if dim is None else dim
    return _random_master(rng, space, dim, max_atoms)


def random_system(rng: np.random.Generator, space=None, dim: int | None = None, times: int | None = None,
                  max_atoms: int = 48, denominator: int = 40) -> SystemGYM:
    """Random compatible system: a random master on ``Xi^(k+1)`` over a grid from 0 to 1.

    Interior grid times are distinct multiples of ``1 / denominator``.
    """
    space = random_space(rng, 6) if space is None else space
    dim = int(rng.integers(1, 3)) if dim is None else dim
    m = int(rng.integers(2, min(7, denominator + 2))) if times is None else times
    t = np.sort(rng.choice(np.arange(1, denominator), size=m - 2, replace=False)) / float(denominator)
    grid = TimeGrid(np.r_[0.0, t, 1.0], 1.0)
    return SystemGYM(grid, dim, _random_master(rng, space, dim * m, max_atoms))


def random_convex(rng: np.random.Generator, dim: int, depth: int = 2, ncells: int | None = None) -> HomFn:
    """Random convex 1-homogeneous function built from convex-preserving combinators."""

    def leaf():
        kind = int(rng.integers(0, 5))
        if kind == 0:
            return EuclidNorm(dim)
        if kind == 1:
            return XiNorm(dim)
        if kind == 2:
            return EtaPart(dim) * float(rng.uniform(-1, 1))
        a = rng.standard_normal((ncells, dim)) if ncells and rng.random() < 0.5 else rng.standard_normal(dim)
        lin = Linear(a, float(rng.standard_normal()))
        return PositivePart(lin) if kind == 3 else lin

    def build(level):
        if level == 0:
            return leaf()
        op = int(rng.integers(0, 3))
        left, right = build(level - 1), build(level - 1)
        if op == 0:
            return Max(left, right)
        if op == 1:
            return left * float(rng.uniform(0.1, 2.0)) + right * float(rng.uniform(0.1, 2.0))
        return PositivePart(left)

    return build(depth)

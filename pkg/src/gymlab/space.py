"""Discretized compact metric spaces carrying a reference measure.

Two variants are provided: a uniform partition of an interval and a finite
labelled point cloud.  Cells are addressed by integer index throughout the
package; every cell has strictly positive reference mass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = ["SpaceModel", "Interval", "PointCloud"]


class SpaceModel:
    """Base class of the discretized base space.

    Subclasses expose ``weights`` (reference mass per cell), ``centers`` and a
    ``distance`` matrix.  ``subdividable`` tells whether cells may be split
    into pieces of prescribed mass, which the density construction requires.
    """

    weights: np.ndarray
    subdividable: bool = False

    @property
    def ncells(self) -> int:
        return int(self.weights.shape[0])

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def distance(self) -> np.ndarray:
        raise NotImplementedError

    def field(self, func) -> np.ndarray:
        """Evaluate ``func`` at cell centers, giving a cell-indexed field."""
        return np.asarray([func(c) for c in self.centers], dtype=float)

    def same_as(self, other: "SpaceModel") -> bool:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Interval(SpaceModel):
    """Uniform partition of ``[lo, hi]`` into ``cells`` cells of equal length.

    Examples
    --------
    >>> X = Interval(0.0, 1.0, 4)
    >>> X.weights
    array([0.25, 0.25, 0.25, 0.25])
    >>> X.cell_of(0.5)
    2
    """

    lo: float
    hi: float
    cells: int
    weights: np.ndarray = field(init=False, repr=False)
    edges: np.ndarray = field(init=False, repr=False)
    subdividable = True

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise ValueError("Interval requires finite lo < hi")
        if int(self.cells) != self.cells or self.cells < 1:
            raise ValueError("cells must be a positive integer")
        object.__setattr__(self, "cells", int(self.cells))
        h = (self.hi - self.lo) / self.cells
        object.__setattr__(self, "weights", np.full(self.cells, h))
        edges = self.lo + h * np.arange(self.cells + 1)
        edges[-1] = self.hi
        object.__setattr__(self, "edges", edges)

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.cells

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def distance(self) -> np.ndarray:
        c = self.centers
        return np.abs(c[:, None] - c[None, :])

    def cell_of(self, x):
        """Index of the cell containing ``x`` (cells are right-open, the last is closed)."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx = np.clip(idx, 0, self.cells - 1)
        if np.any((x < self.lo) | (x > self.hi)):
            raise ValueError("point outside the interval")
        return int(idx) if idx.ndim == 0 else idx

    def same_as(self, other) -> bool:
        return (
            isinstance(other, Interval)
            and self.lo == other.lo
            and self.hi == other.hi
            and self.cells == other.cells
        )


@dataclass(frozen=True, eq=False)
class PointCloud(SpaceModel):
    """Finite metric space of labelled points with positive weights.

    Parameters
    ----------
    points : sequence of str
        Labels, one per point.
    weights : array_like
        Strictly positive reference masses.
    distances : array_like
        Symmetric matrix with zero diagonal satisfying the triangle inequality.
    """

    points: tuple
    weights: np.ndarray
    distances: np.ndarray
    subdividable = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        d = np.asarray(self.distances, dtype=float)
        n = len(self.points)
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "distances", d)
        if n == 0 or w.shape != (n,) or d.shape != (n, n):
            raise ValueError("PointCloud needs matching points, weights and distances")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("point weights must be finite and strictly positive")
        if np.any(d < 0) or not np.allclose(d, d.T, rtol=0, atol=0) or np.any(np.diag(d) != 0):
            raise ValueError("distances must be symmetric, nonnegative, zero on the diagonal")
        # d[i,k] <= d[i,j] + d[j,k] for all triples
        slack = d[:, None, :] - d[:, :, None] - d[None, :, :]
        if np.any(slack > 1e-12 * max(1.0, float(d.max()))):
            raise ValueError("distances violate the triangle inequality")

    @property
    def centers(self) -> np.ndarray:
        return np.arange(len(self.points), dtype=float)

    def distance(self) -> np.ndarray:
        return self.distances

    def same_as(self, other) -> bool:
        return (
            isinstance(other, PointCloud)
            and self.points == other.points
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.distances, other.distances)
        )


def check_same_space(a: SpaceModel, b: SpaceModel) -> None:
    if a is not b and not a.same_as(b):
        raise ValueError("objects live on different spaces")


def point_cloud(labels: Sequence[str], weights, distances) -> PointCloud:
    return PointCloud(tuple(labels), np.asarray(weights, float), np.asarray(distances, float))

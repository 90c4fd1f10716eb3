"""Geometry primitives shared by the rest of the package.

Points are plain float64 triples (or ``(n, 3)`` arrays of them). Hot loops
compare squared distances; square roots are only taken at API boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

SQRT3 = math.sqrt(3.0)


class HdistError(Exception):
    """Base class for errors raised by this package."""


class DegenerateInputError(HdistError, ValueError):
    """Input has no usable geometry (empty set, zero extent, ...)."""


class DegenerateGridError(DegenerateInputError):
    """The target cloud collapses to a single location; no grid can be built.

    Callers should fall back to the brute-force path.
    """


class ParseError(HdistError, ValueError):
    pass


class ConsistencyError(HdistError, RuntimeError):
    """An internal invariant was violated."""


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite coordinate in {self!r}")

    def __iter__(self):
        return iter((self.x, self.y, self.z))

    def __getitem__(self, i):
        return (self.x, self.y, self.z)[i]

    def __len__(self):
        return 3


@dataclass(frozen=True)
class CellIndex:
    ix: int
    iy: int
    iz: int

    def __iter__(self):
        return iter((self.ix, self.iy, self.iz))


@dataclass(frozen=True)
class Aabb:
    min: Point3
    max: Point3

    def __post_init__(self):
        if any(lo > hi for lo, hi in zip(self.min, self.max)):
            raise ValueError(f"inverted box {self.min} > {self.max}")

    @property
    def extent(self) -> tuple[float, float, float]:
        return tuple(hi - lo for lo, hi in zip(self.min, self.max))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.min, self.max))

    def contains(self, p: Sequence[float]) -> bool:
        return all(lo <= c <= hi for lo, c, hi in zip(self.min, p, self.max))


def sq_dist(p: Sequence[float], q: Sequence[float]) -> float:
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    dz = p[2] - q[2]
    return dx * dx + dy * dy + dz * dz


def dist(p: Sequence[float], q: Sequence[float]) -> float:
    """Euclidean distance between two 3-D points.

    Uses ``math.hypot`` so tiny or huge separations do not under/overflow;
    the kernels compare squared distances and agree with this to an ulp.
    """
    return math.hypot(p[0] - q[0], p[1] - q[1], p[2] - q[2])


def cheb_dist(p: Sequence[float], q: Sequence[float]) -> float:
    """Chebyshev (max-axis) distance.

    A point lies inside a cube of half-width ``r`` centred on ``q`` exactly
    when ``cheb_dist(p, q) <= r``; the broad phase uses this to stand in for
    a ray/AABB hit.
    """
    return max(abs(p[0] - q[0]), abs(p[1] - q[1]), abs(p[2] - q[2]))


def as_points(points: Iterable[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Coerce to a C-contiguous ``(n, 3)`` float64 array."""
    arr = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {arr.shape}")
    return arr


def aabb_of(points) -> Aabb:
    """Tight axis-aligned box around a nonempty point set."""
    arr = as_points(points)
    if len(arr) == 0:
        raise DegenerateInputError("cannot bound an empty point set")
    lo = arr.min(axis=0)
    hi = arr.max(axis=0)
    return Aabb(Point3(*map(float, lo)), Point3(*map(float, hi)))

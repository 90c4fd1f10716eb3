"""Quantized index space over a target cloud.

The target's bounding box is cut into cubic cells of edge ``s = l / 2**k``
(``l`` the longest extent). Every occupied cell becomes one representative
point at its integer min corner; query points are only rescaled, never
merged, and may fall outside the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import CellIndex, DegenerateGridError, aabb_of
from .mesh_io import PointCloud


@dataclass(frozen=True)
class GridParams:
    origin: tuple[float, float, float]
    s: float
    k: int
    cells_per_dim: tuple[int, int, int]

    @property
    def origin_array(self) -> np.ndarray:
        return np.array(self.origin, dtype=np.float64)


def build_grid(target: PointCloud, k: int) -> GridParams:
    if k < 1:
        raise ValueError(f"bit count must be >= 1, got {k}")
    box = aabb_of(target.points)
    ext = box.extent
    longest = max(ext)
    if longest == 0.0:
        raise DegenerateGridError(
            f"all {len(target)} target points coincide; use the brute-force path")
    s = longest / 2**k
    longest_axis = ext.index(longest)
    cells = []
    for d, e in enumerate(ext):
        if d == longest_axis:
            cells.append(2**k)
        else:
            cells.append(max(1, math.ceil(e / s)))
    return GridParams(tuple(box.min), s, k, tuple(cells))


def quantize_array(points: np.ndarray, grid: GridParams, clamp: bool) -> np.ndarray:
    """Vectorised ``quantize``; returns an ``(n, 3)`` int64 array."""
    idx = np.floor((points - grid.origin_array) / grid.s).astype(np.int64)
    if clamp:
        np.clip(idx, 0, np.array(grid.cells_per_dim, dtype=np.int64) - 1, out=idx)
    return idx


def quantize(p, grid: GridParams, clamp: bool = False) -> CellIndex:
    """Cell of ``p``. Target points are clamped into the grid (points on the
    max face land in the last cell); queries are left unclamped."""
    idx = quantize_array(np.asarray(p, dtype=np.float64).reshape(1, 3), grid, clamp)[0]
    return CellIndex(*map(int, idx))


@dataclass(frozen=True, eq=False)
class IndexSpace:
    """Occupied cells of the target plus their member point ids.

    ``cell_keys[c]`` is the integer index of cell ``c``; its members are
    ``members[cell_start[c]:cell_start[c + 1]]``, ascending by point id.
    """

    grid: GridParams
    cell_keys: np.ndarray  # (m, 3) int64
    cell_start: np.ndarray  # (m + 1,) int64
    members: np.ndarray  # (n,) int64
    point_cell: np.ndarray  # (n,) int64 row into cell_keys

    @property
    def n_cells(self) -> int:
        return len(self.cell_keys)

    @cached_property
    def rep_points(self) -> np.ndarray:
        """Representative points in index space (the integer cell corners)."""
        return np.ascontiguousarray(self.cell_keys, dtype=np.float64)

    def member_ids(self, cell: int) -> np.ndarray:
        return self.members[self.cell_start[cell]:self.cell_start[cell + 1]]

    @cached_property
    def _row_of(self) -> dict[CellIndex, int]:
        return {CellIndex(*map(int, key)): row for row, key in enumerate(self.cell_keys)}

    def row_of(self, cell: CellIndex) -> int:
        return self._row_of[cell]

    @property
    def cells(self) -> dict[CellIndex, list[int]]:
        return {c: self.member_ids(row).tolist() for c, row in self._row_of.items()}

    def corner(self, cell: int) -> np.ndarray:
        """Object-space location of a representative point."""
        return self.grid.origin_array + self.grid.s * self.rep_points[cell]


def build_index_space(target: PointCloud, k: int) -> IndexSpace:
    grid = build_grid(target, k)
    q = quantize_array(target.points, grid, clamp=True)
    cx, cy, _ = grid.cells_per_dim
    lin = q[:, 0] + cx * (q[:, 1] + cy * q[:, 2])
    order = np.argsort(lin, kind="stable")
    uniq, first, inverse = np.unique(lin[order], return_index=True, return_inverse=True)
    cell_start = np.append(first, len(order)).astype(np.int64)
    point_cell = np.empty(len(order), dtype=np.int64)
    point_cell[order] = inverse
    return IndexSpace(
        grid=grid,
        cell_keys=np.ascontiguousarray(q[order[first]]),
        cell_start=cell_start,
        members=order.astype(np.int64),
        point_cell=point_cell,
    )


def scale_queries(queries: PointCloud, grid: GridParams) -> np.ndarray:
    """Continuous index-space coordinates of every query, row ``i`` = query id ``i``."""
    return np.ascontiguousarray((queries.points - grid.origin_array) / grid.s)


def unscale(scaled: np.ndarray, grid: GridParams) -> np.ndarray:
    return scaled * grid.s + grid.origin_array


def dump_index(space: IndexSpace, fh) -> None:
    """One ``ix iy iz count`` line per occupied cell."""
    g = space.grid
    fh.write(f"# origin {g.origin[0]!r} {g.origin[1]!r} {g.origin[2]!r} s {g.s!r} k {g.k} "
             f"cells {g.cells_per_dim[0]} {g.cells_per_dim[1]} {g.cells_per_dim[2]}\n")
    counts = np.diff(space.cell_start)
    for (ix, iy, iz), n in zip(space.cell_keys.tolist(), counts.tolist()):
        fh.write(f"{ix} {iy} {iz} {n}\n")

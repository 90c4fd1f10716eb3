"""Exact distance refinement over broad-phase candidates, the full two-way
pipeline, and the all-pairs oracle it is checked against."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _parallel
from .broad_search import (_STACK, BroadPhaseResult, _any_hit, _collect, _nearest_leaf, broad_phase,
                           build_bvh, resolve_r0_multiple)
from .core import SQRT3, ConsistencyError, DegenerateGridError
from .index_space import IndexSpace, build_index_space, scale_queries
from .mesh_io import PointCloud


@numba.njit(cache=True, nogil=True)
def _refine_range(start, end, gray_ids, cand_off, cand_leaf, cell_start, members, a, b,
                  scaled, corners, s2, best_d2, best_id, evaluated):
    """Per gray query, exact min over the members of its candidate cells.

    When ``corners`` is non-empty a cell is skipped if the query's distance
    to the unit cell box (index units) already exceeds the best distance;
    the slack keeps the skip strictly conservative, so the minimum and its
    smallest-id witness are unchanged.
    """
    prune = corners.shape[0] > 0
    for g in range(start, end):
        q = gray_ids[g]
        ax = a[q, 0]
        ay = a[q, 1]
        az = a[q, 2]
        bd = np.inf
        bj = -1
        done = 0
        for t in range(cand_off[g], cand_off[g + 1]):
            c = cand_leaf[t]
            if prune and bj >= 0:
                gap2 = 0.0
                for d in range(3):
                    v = corners[c, d] - scaled[q, d]
                    if v <= 0.0:
                        v = scaled[q, d] - corners[c, d] - 1.0
                    if v > 0.0:
                        gap2 += v * v
                gap = np.sqrt(gap2) - 1e-9
                if gap > 0.0 and gap * gap * s2 > bd:
                    continue
            for u in range(cell_start[c], cell_start[c + 1]):
                j = members[u]
                dx = ax - b[j, 0]
                dy = ay - b[j, 1]
                dz = az - b[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < bd or (d2 == bd and j < bj):
                    bd = d2
                    bj = j
            done += cell_start[c + 1] - cell_start[c]
        best_d2[g] = bd
        best_id[g] = bj
        evaluated[g] = done


@numba.njit(cache=True, nogil=True)
def _fused_range(start, end, gray_ids, reach, queries, lo, hi, left, leaf, packed, order, first, count,
                 corners, cell_start, members, a, b, s2, skip_r, floor2, tight,
                 best_d2, best_id, n_cand, n_pairs, n_eval):
    """Gather and refine in one pass: re-traverse at each survivor's final
    sweep radius and evaluate the hits immediately.

    Without ``cell_start`` the leaves are the target points themselves and
    the traversal distance is already the exact one.

    ``floor2`` is a squared lower bound on the one-sided distance. A query
    with a leaf inside ``skip_r`` certainly has a point closer than that
    bound and is marked skipped (``best_id = -2``); a query whose running
    min drops below it stops early. Neither can be the maximiser.

    With ``tight`` the nearest leaf bounds the search: a closer point must
    sit in a cell whose corner is within that distance plus one cell
    diagonal (or, without cells, be a leaf within it), so the traversal
    stops at that radius instead of ``reach``.
    """
    stack = np.empty(_STACK, np.int64)
    buf_leaf = np.empty(256, np.int64)
    buf_d2 = np.empty(256)
    cells = cell_start.shape[0] > 0
    for g in range(start, end):
        q = gray_ids[g]
        r = reach[g]
        qx = queries[q, 0]
        qy = queries[q, 1]
        qz = queries[q, 2]
        if skip_r > 0.0 and _any_hit(qx, qy, qz, skip_r, skip_r * skip_r, lo, hi, left, leaf, packed,
                                     first, stack):
            best_d2[g] = -1.0
            best_id[g] = -2
            n_cand[g] = 0
            n_pairs[g] = 0
            n_eval[g] = 0
            continue
        bd = np.inf
        bj = -1
        if tight:
            c, d2 = _nearest_leaf(qx, qy, qz, lo, hi, left, leaf, packed, order, first, stack)
            if cells:
                for w in range(cell_start[c], cell_start[c + 1]):
                    j = members[w]
                    dx = a[q, 0] - b[j, 0]
                    dy = a[q, 1] - b[j, 1]
                    dz = a[q, 2] - b[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < bd or (d2 == bd and j < bj):
                        bd = d2
                        bj = j
                done = cell_start[c + 1] - cell_start[c]
            else:
                bd = d2
                bj = c
                done = 1
            if bd < floor2:
                best_d2[g] = bd
                best_id[g] = bj
                n_cand[g] = 0
                n_pairs[g] = 0
                n_eval[g] = done
                continue
            # only cells that could hold a point at distance <= sqrt(bd) matter
            if cells:
                r = min(r, np.sqrt(bd / s2) * (1.0 + 1e-9) + 1.7320508075688772 + 1e-9)
            else:
                r = min(r, np.sqrt(bd) * (1.0 + 1e-9))
        while True:
            n = _collect(qx, qy, qz, r, r * r, lo, hi, left, leaf, packed, order, first, count, stack,
                         buf_leaf, buf_d2, 0, True)
            if n <= buf_leaf.shape[0]:
                break
            buf_leaf = np.empty(2 * n, np.int64)
            buf_d2 = np.empty(2 * n)
        n_cand[g] = n
        if not cells:
            for u in range(n):
                d2 = buf_d2[u]
                j = buf_leaf[u]
                if d2 < bd or (d2 == bd and j < bj):
                    bd = d2
                    bj = j
            best_d2[g] = bd
            best_id[g] = bj
            n_pairs[g] = n
            n_eval[g] = n
            continue
        ax = a[q, 0]
        ay = a[q, 1]
        az = a[q, 2]
        # seed the running min with the cell whose corner is nearest, then skip
        # cells whose box is farther than it
        seed = 0
        for u in range(1, n):
            if buf_d2[u] < buf_d2[seed]:
                seed = u
        c = buf_leaf[seed]
        for w in range(cell_start[c], cell_start[c + 1]):
            j = members[w]
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < bd or (d2 == bd and j < bj):
                bd = d2
                bj = j
        done = cell_start[c + 1] - cell_start[c]
        pairs = 0
        for u in range(n):
            c = buf_leaf[u]
            pairs += cell_start[c + 1] - cell_start[c]
            if u == seed or bd < floor2:
                continue
            gap2 = 0.0
            for d in range(3):
                v = corners[c, d] - queries[q, d]
                if v <= 0.0:
                    v = queries[q, d] - corners[c, d] - 1.0
                if v > 0.0:
                    gap2 += v * v
            gap = np.sqrt(gap2) - 1e-9
            if gap > 0.0 and gap * gap * s2 > bd:
                continue
            for w in range(cell_start[c], cell_start[c + 1]):
                j = members[w]
                dx = ax - b[j, 0]
                dy = ay - b[j, 1]
                dz = az - b[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < bd or (d2 == bd and j < bj):
                    bd = d2
                    bj = j
            done += cell_start[c + 1] - cell_start[c]
        best_d2[g] = bd
        best_id[g] = bj
        n_pairs[g] = pairs
        n_eval[g] = done


@numba.njit(cache=True, nogil=True)
def _brute_range(start, end, a, b, best_d2, best_id):
    nb = b.shape[0]
    for i in range(start, end):
        ax = a[i, 0]
        ay = a[i, 1]
        az = a[i, 2]
        bd = np.inf
        bj = -1
        for j in range(nb):
            dx = ax - b[j, 0]
            dy = ay - b[j, 1]
            dz = az - b[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < bd:
                bd = d2
                bj = j
        best_d2[i] = bd
        best_id[i] = bj


def _argmax_first(values: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the smallest id on ties
    return int(np.argmax(values))


@dataclass(frozen=True)
class OneSided:
    h: float
    query: int
    target: int
    stats: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HausdorffResult:
    H: float
    h_ab: float
    h_ba: float
    witness: tuple[int, int, str]  # (query id, target id, "AB" | "BA")
    stats: dict = field(default_factory=dict)

    @property
    def witness_points(self):
        return self.stats.get("witness_points")


def refine_one_sided(bp: BroadPhaseResult, a: PointCloud, b: PointCloud, cell_start: np.ndarray,
                     members: np.ndarray, threads: int = 1, *, space: IndexSpace | None = None,
                     scaled: np.ndarray | None = None) -> OneSided:
    """Max over gray-zone queries of the min distance to the members of their candidate cells.

    Ties go to the smallest query id, then the smallest target id. Passing
    the index ``space`` and the ``scaled`` queries enables whole-cell skips.
    """
    if len(bp.gray_ids) == 0:
        raise ConsistencyError("broad phase returned no candidate queries")
    if np.any(np.diff(cell_start) <= 0):
        raise ConsistencyError("index space contains an empty cell")
    ng = len(bp.gray_ids)
    best_d2 = np.empty(ng)
    best_id = np.empty(ng, np.int64)
    evaluated = np.empty(ng, np.int64)
    if space is not None and scaled is not None:
        corners, s2 = space.rep_points, space.grid.s ** 2
    else:
        corners, s2, scaled = np.empty((0, 3)), 0.0, np.empty((0, 3))
    _parallel.run_chunked(
        lambda lo, hi: _refine_range(lo, hi, bp.gray_ids, bp.cand_offsets, bp.cand_leaf, cell_start,
                                     members, a.points, b.points, scaled, corners, s2,
                                     best_d2, best_id, evaluated),
        ng, threads)
    if np.any(best_id < 0):
        raise ConsistencyError("a gray-zone query has no candidate points")
    g = _argmax_first(best_d2)
    sizes = np.diff(cell_start)
    pairs = int(sizes[bp.cand_leaf].sum())
    return OneSided(math.sqrt(best_d2[g]), int(bp.gray_ids[g]), int(best_id[g]),
                    {"candidate_cells": bp.n_candidates, "candidate_pairs": pairs,
                     "evaluated_pairs": int(evaluated.sum())})


_SEEDS = 64


def refine_fused(bp: BroadPhaseResult, bvh, queries: np.ndarray, a: PointCloud, b: PointCloud,
                 space: IndexSpace | None, threads: int = 1, early_exit: bool = True) -> OneSided:
    """Same result as ``refine_one_sided`` over a materialized broad phase,
    without storing the candidate lists. ``space=None`` means the BVH leaves
    are the target points (no index space).

    With ``early_exit`` the exact distances of a few queries covered in the
    last iteration give a lower bound ``L`` on the answer; other queries
    stop as soon as they are known to lie closer than ``L``. The maximum,
    its witness and the tie-breaks are unchanged, and the bound does not
    depend on the thread count.
    """
    if len(bp.gray_ids) == 0:
        raise ConsistencyError("broad phase returned no candidate queries")
    if space is not None:
        if np.any(np.diff(space.cell_start) <= 0):
            raise ConsistencyError("index space contains an empty cell")
        cell_start, members, s = space.cell_start, space.members, space.grid.s
    else:
        cell_start, members, s = np.empty(0, np.int64), np.empty(0, np.int64), 1.0
    s2 = s * s if space is not None else 0.0
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    corners = bvh.centers

    def run(ids, reach, skip_r, floor2):
        ng = len(ids)
        out = (np.empty(ng), np.empty(ng, np.int64), np.empty(ng, np.int64), np.empty(ng, np.int64),
               np.empty(ng, np.int64))
        _parallel.run_chunked(
            lambda lo, hi: _fused_range(lo, hi, ids, reach, queries, *bvh.arrays, corners, cell_start,
                                        members, a.points, b.points, s2, skip_r, floor2, early_exit, *out),
            ng, threads)
        return out

    skip_r = floor2 = 0.0
    if early_exit:
        pick = np.flatnonzero(bp.coverage[bp.gray_ids] == bp.n_final)[:_SEEDS]
        seed_d2 = run(bp.gray_ids[pick], bp.reach[pick], 0.0, 0.0)[0]
        floor2 = float(seed_d2.max())
        # any leaf this close guarantees a point strictly nearer than sqrt(floor2)
        reach_l = math.sqrt(floor2) / s * (1 - 1e-9)
        skip_r = reach_l - SQRT3 * (1 + 1e-9) if space is not None else reach_l
    best_d2, best_id, n_cand, n_pairs, n_eval = run(bp.gray_ids, bp.reach, max(skip_r, 0.0), floor2)
    if np.any(best_id == -1):
        raise ConsistencyError("a gray-zone query has no candidate points")
    g = _argmax_first(best_d2)
    return OneSided(math.sqrt(best_d2[g]), int(bp.gray_ids[g]), int(best_id[g]),
                    {"candidate_cells": int(n_cand.sum()), "candidate_pairs": int(n_pairs.sum()),
                     "evaluated_pairs": int(n_eval.sum()), "skipped": int(np.count_nonzero(best_id == -2))})


def brute_force_one_sided(a: PointCloud, b: PointCloud, threads: int = 1) -> OneSided:
    best_d2, best_id = nearest_sq(a.points, b.points, threads)
    i = _argmax_first(best_d2)
    return OneSided(math.sqrt(best_d2[i]), i, int(best_id[i]),
                    {"candidate_pairs": len(a) * len(b)})


def nearest_sq(a: np.ndarray, b: np.ndarray, threads: int = 1):
    """All-pairs nearest neighbour: squared distance and smallest nearest id per row of ``a``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    best_d2 = np.empty(len(a))
    best_id = np.empty(len(a), np.int64)
    _parallel.run_chunked(lambda lo, hi: _brute_range(lo, hi, a, b, best_d2, best_id), len(a), threads)
    return best_d2, best_id


@dataclass(frozen=True)
class HausdorffConfig:
    k: int = 7
    r0: str | int = "auto"  # "auto" | "sqrt3" | multiple of sqrt(3)
    threads: int | str = 1
    post_sweeps: int = 2
    trace: object = None  # callable(side, TraceRow)
    fused: bool = True  # gather candidates inside the refine kernel instead of storing them
    early_exit: bool = True  # fused path only: stop queries known to lie below the answer

    def __post_init__(self):
        if not 1 <= self.k <= 20:
            raise ValueError(f"bit count k must lie in [1, 20], got {self.k}")


def _combine(ab: OneSided, ba: OneSided, a: PointCloud, b: PointCloud, stats: dict) -> HausdorffResult:
    if ab.h >= ba.h:
        witness = (ab.query, ab.target, "AB")
        pts = (a.points[ab.query], b.points[ab.target])
    else:
        witness = (ba.query, ba.target, "BA")
        pts = (b.points[ba.query], a.points[ba.target])
    stats["witness_points"] = tuple(tuple(map(float, p)) for p in pts)
    return HausdorffResult(max(ab.h, ba.h), ab.h, ba.h, witness, stats)


@dataclass
class SideRun:
    """Everything one direction of the pipeline produced, kept for inspection."""

    space: IndexSpace
    bvh: object
    scaled: np.ndarray
    broad: BroadPhaseResult
    result: OneSided
    timings: dict


def run_side(a: PointCloud, b: PointCloud, cfg: HausdorffConfig, side: str = "AB") -> SideRun:
    """One direction: index space over ``b``, queries from ``a``."""
    threads = _parallel.resolve_threads(cfg.threads)
    t0 = time.perf_counter()
    space = build_index_space(b, cfg.k)
    scaled = scale_queries(a, space.grid)
    t1 = time.perf_counter()
    bvh = build_bvh(space)
    m = resolve_r0_multiple(cfg.r0, a.points, b.points, space.grid.s)
    tracer = None if cfg.trace is None else (lambda row: cfg.trace(side, row))
    bp = broad_phase(scaled, bvh, m * SQRT3, SQRT3, threads=threads, post_sweeps=cfg.post_sweeps,
                     trace=tracer, materialize=not cfg.fused)
    t2 = time.perf_counter()
    if cfg.fused:
        res = refine_fused(bp, bvh, scaled, a, b, space, threads, cfg.early_exit)
    else:
        res = refine_one_sided(bp, a, b, space.cell_start, space.members, threads,
                               space=space, scaled=scaled)
    t3 = time.perf_counter()
    timings = {"index": t1 - t0, "broad": t2 - t1, "narrow": t3 - t2}
    res.stats.update({
        "iterations": bp.n_final, "restarts": bp.restarts, "r0_multiple": int(round(bp.r0 / SQRT3)),
        "cells": space.n_cells, "gray": len(bp.gray_ids), **{f"t_{k}": v for k, v in timings.items()},
    })
    return SideRun(space, bvh, scaled, bp, res, timings)


def hausdorff(a: PointCloud, b: PointCloud, cfg: HausdorffConfig | None = None) -> HausdorffResult:
    """Two-way Hausdorff distance through the quantized broad phase.

    Each direction is run independently. A target cloud whose points all
    coincide cannot be gridded; that side silently uses the all-pairs scan
    and ``stats["fallback"]`` names it.
    """
    cfg = cfg or HausdorffConfig()
    threads = _parallel.resolve_threads(cfg.threads)
    t0 = time.perf_counter()
    sides = {}
    fallback = []
    for name, q, t in (("AB", a, b), ("BA", b, a)):
        try:
            sides[name] = run_side(q, t, cfg, name).result
        except DegenerateGridError:
            fallback.append(name)
            ts = time.perf_counter()
            res = brute_force_one_sided(q, t, threads)
            res.stats.update({"t_index": 0.0, "t_broad": 0.0, "t_narrow": time.perf_counter() - ts,
                              "iterations": 0})
            sides[name] = res
    stats = {"mode": "full", "k": cfg.k, "fallback": fallback, "total": time.perf_counter() - t0,
             "AB": sides["AB"].stats, "BA": sides["BA"].stats}
    return _combine(sides["AB"], sides["BA"], a, b, stats)


def brute_force_hausdorff(a: PointCloud, b: PointCloud, threads: int | str = 1) -> HausdorffResult:
    threads = _parallel.resolve_threads(threads)
    t0 = time.perf_counter()
    ab = brute_force_one_sided(a, b, threads)
    t1 = time.perf_counter()
    ba = brute_force_one_sided(b, a, threads)
    t2 = time.perf_counter()
    ab.stats.update({"t_index": 0.0, "t_broad": 0.0, "t_narrow": t1 - t0, "iterations": 0})
    ba.stats.update({"t_index": 0.0, "t_broad": 0.0, "t_narrow": t2 - t1, "iterations": 0})
    stats = {"mode": "brute", "fallback": [], "total": t2 - t0, "AB": ab.stats, "BA": ba.stats}
    return _combine(ab, ba, a, b, stats)

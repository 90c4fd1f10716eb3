"""Broad phase: expanding-radius epsilon-neighbour search over a BVH.

Each leaf of the BVH is one representative point. A hardware ray/AABB hit
against a cube of half-width ``r`` around a leaf is the same predicate as
the query lying within Chebyshev distance ``r`` of the leaf, so leaves keep
a fixed box and the query side grows instead; no BVH refit is needed.
Chebyshev hits then go through an exact in-sphere test.

Coverage bookkeeping follows the gray-zone rule: with radius increment
``alpha`` a query first covered at iteration ``n`` has its true nearest
distance within ``((n-2) alpha, (n+1) alpha)``, so only queries covered in
the final three iterations can attain the maximum. Their candidate cells are
gathered up to two iterations past their own coverage, because the true
nearest neighbour of a quantized target may sit in a cell up to ``2 alpha``
beyond the covering radius.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _parallel
from .core import SQRT3, Aabb, CellIndex, Point3, aabb_of
from .index_space import IndexSpace

_STACK = 128
# slack on the box prefilter only; the in-sphere test stays exact
_BOX_SLACK = 1.0 + 1e-12


# ------------------------------------------------------------------ BVH

@numba.njit(cache=True, nogil=True)
def _build_bvh(centers):
    n = centers.shape[0]
    m = 2 * n - 1
    lo = np.empty((m, 3))
    hi = np.empty((m, 3))
    left = np.full(m, -1, np.int64)
    right = np.full(m, -1, np.int64)
    leaf = np.full(m, -1, np.int64)
    first = np.empty(m, np.int64)
    count = np.empty(m, np.int64)
    order = np.arange(n)
    st_node = np.empty(m, np.int64)
    st_lo = np.empty(m, np.int64)
    st_hi = np.empty(m, np.int64)
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    sp = 1
    next_node = 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        s = st_lo[sp]
        e = st_hi[sp]
        first[node] = s
        count[node] = e - s
        for d in range(3):
            lo[node, d] = np.inf
            hi[node, d] = -np.inf
        for t in range(s, e):
            c = order[t]
            for d in range(3):
                v = centers[c, d]
                if v < lo[node, d]:
                    lo[node, d] = v
                if v > hi[node, d]:
                    hi[node, d] = v
        if e - s == 1:
            leaf[node] = order[s]
            continue
        axis = 0
        for d in range(1, 3):
            if hi[node, d] - lo[node, d] > hi[node, axis] - lo[node, axis]:
                axis = d
        seg = order[s:e].copy()
        keys = np.empty(e - s)
        for t in range(e - s):
            keys[t] = centers[seg[t], axis]
        perm = np.argsort(keys, kind="mergesort")
        for t in range(e - s):
            order[s + t] = seg[perm[t]]
        mid = (s + e) // 2
        lc = next_node
        rc = next_node + 1
        next_node += 2
        left[node] = lc
        right[node] = rc
        st_node[sp] = rc
        st_lo[sp] = mid
        st_hi[sp] = e
        sp += 1
        st_node[sp] = lc
        st_lo[sp] = s
        st_hi[sp] = mid
        sp += 1
    return lo, hi, left, right, leaf, order, first, count


@dataclass(frozen=True, eq=False)
class CellBvh:
    """Median-split BVH, one leaf per representative point.

    ``node_lo``/``node_hi`` bound the leaf *centres* below each node; the
    leaf boxes proper are those centres padded by ``half_width``.
    """

    centers: np.ndarray
    half_width: float
    node_lo: np.ndarray
    node_hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf: np.ndarray
    order: np.ndarray  # leaves in subtree order; node i covers order[first[i]:first[i] + count[i]]
    first: np.ndarray
    count: np.ndarray
    packed: np.ndarray = None  # centers[order], read sequentially by leaf-range scans

    def __post_init__(self):
        if self.packed is None:
            object.__setattr__(self, "packed", np.ascontiguousarray(self.centers[self.order]))

    @property
    def arrays(self) -> tuple:
        """Traversal arrays in kernel argument order."""
        return (self.node_lo, self.node_hi, self.left, self.leaf, self.packed, self.order, self.first,
                self.count)

    @property
    def n_leaves(self) -> int:
        return len(self.centers)

    def node_box(self, node: int) -> Aabb:
        hw = self.half_width
        return Aabb(Point3(*(self.node_lo[node] - hw)), Point3(*(self.node_hi[node] + hw)))

    def leaf_box(self, i: int) -> Aabb:
        c = self.centers[i]
        return Aabb(Point3(*(c - self.half_width)), Point3(*(c + self.half_width)))


def build_bvh_over(centers: np.ndarray, half_width: float) -> CellBvh:
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if len(centers) == 0:
        raise ValueError("cannot build a BVH over zero leaves")
    return CellBvh(centers, half_width, *_build_bvh(centers))


def build_bvh(space: IndexSpace) -> CellBvh:
    """BVH over the occupied cells; leaf ``i`` is cell row ``i``, boxed by a
    ``2*sqrt(3)`` cube around its representative point."""
    if space.n_cells == 0:
        raise ValueError("index space has no occupied cells")
    return build_bvh_over(space.rep_points, SQRT3)


# ------------------------------------------------------------ traversal

@numba.njit(cache=True, nogil=True, inline="always")
def _box_gap2(qx, qy, qz, lo, hi, node):
    """Squared Euclidean distance from the query to a node's centre box."""
    g = 0.0
    v = lo[node, 0] - qx
    if v > 0.0:
        g += v * v
    else:
        v = qx - hi[node, 0]
        if v > 0.0:
            g += v * v
    v = lo[node, 1] - qy
    if v > 0.0:
        g += v * v
    else:
        v = qy - hi[node, 1]
        if v > 0.0:
            g += v * v
    v = lo[node, 2] - qz
    if v > 0.0:
        g += v * v
    else:
        v = qz - hi[node, 2]
        if v > 0.0:
            g += v * v
    return g


@numba.njit(cache=True, nogil=True, inline="always")
def _box_far2(qx, qy, qz, lo, hi, node):
    """Squared distance from the query to the farthest corner of a node's centre box."""
    a = max(qx - lo[node, 0], hi[node, 0] - qx)
    b = max(qy - lo[node, 1], hi[node, 1] - qy)
    c = max(qz - lo[node, 2], hi[node, 2] - qz)
    return a * a + b * b + c * c


@numba.njit(cache=True, nogil=True)
def _any_hit(qx, qy, qz, r, r2, lo, hi, left, leaf, packed, first, stack):
    rb = r * _BOX_SLACK
    rb2 = rb * rb
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_gap2(qx, qy, qz, lo, hi, node) > rb2:
            continue
        if leaf[node] < 0 and _box_far2(qx, qy, qz, lo, hi, node) > r2 * (1.0 - 1e-9):
            stack[sp] = left[node] + 1
            stack[sp + 1] = left[node]
            sp += 2
        else:
            # a leaf, or a node wholly inside the sphere whose first leaf must hit
            t = first[node]
            dx = qx - packed[t, 0]
            dy = qy - packed[t, 1]
            dz = qz - packed[t, 2]
            if max(abs(dx), abs(dy), abs(dz)) <= rb and dx * dx + dy * dy + dz * dz <= r2:
                return True
            if leaf[node] < 0:
                stack[sp] = left[node] + 1
                stack[sp + 1] = left[node]
                sp += 2
    return False


@numba.njit(cache=True, nogil=True)
def _nearest_leaf(qx, qy, qz, lo, hi, left, leaf, packed, order, first, stack):
    """Branch-and-bound nearest leaf centre; returns ``(leaf, squared distance)``."""
    best = np.inf
    arg = -1
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_gap2(qx, qy, qz, lo, hi, node) >= best:
            continue
        if leaf[node] >= 0:
            t = first[node]
            dx = qx - packed[t, 0]
            dy = qy - packed[t, 1]
            dz = qz - packed[t, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 < best:
                best = d2
                arg = order[t]
            continue
        # visit the nearer child first
        l = left[node]
        if _box_gap2(qx, qy, qz, lo, hi, l) <= _box_gap2(qx, qy, qz, lo, hi, l + 1):
            stack[sp] = l + 1
            stack[sp + 1] = l
        else:
            stack[sp] = l
            stack[sp + 1] = l + 1
        sp += 2
    return arg, best


@numba.njit(cache=True, nogil=True)
def _collect(qx, qy, qz, r, r2, lo, hi, left, leaf, packed, order, first, count, stack,
             out_leaf, out_d2, pos, sphere):
    """Append hits to ``out_*`` starting at ``pos``; returns the new position.

    Hits past the end of ``out_leaf`` are counted but not stored.
    ``sphere=False`` returns the raw box hits (Chebyshev distance <= r);
    otherwise internal nodes are pruned by their Euclidean gap, nodes lying
    wholly inside the sphere are scanned leaf by leaf without further node
    tests, and every box hit must pass the in-sphere test.
    """
    rb = r * _BOX_SLACK
    rb2 = rb * rb
    inside2 = r2 * (1.0 - 1e-9)
    cap = out_leaf.shape[0]
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        lo_t = first[node]
        hi_t = lo_t + 1
        if sphere:
            if _box_gap2(qx, qy, qz, lo, hi, node) > rb2:
                continue
            if leaf[node] < 0:
                if _box_far2(qx, qy, qz, lo, hi, node) > inside2:
                    stack[sp] = left[node] + 1
                    stack[sp + 1] = left[node]
                    sp += 2
                    continue
                hi_t = lo_t + count[node]
        else:
            if (lo[node, 0] - qx > rb or qx - hi[node, 0] > rb
                    or lo[node, 1] - qy > rb or qy - hi[node, 1] > rb
                    or lo[node, 2] - qz > rb or qz - hi[node, 2] > rb):
                continue
            if leaf[node] < 0:
                stack[sp] = left[node] + 1
                stack[sp + 1] = left[node]
                sp += 2
                continue
        for t in range(lo_t, hi_t):
            lf = order[t]
            dx = qx - packed[t, 0]
            dy = qy - packed[t, 1]
            dz = qz - packed[t, 2]
            if max(abs(dx), abs(dy), abs(dz)) > (rb if sphere else r):
                continue
            d2 = dx * dx + dy * dy + dz * dz
            if sphere and d2 > r2:
                continue
            if pos < cap:
                out_leaf[pos] = lf
                out_d2[pos] = d2
            pos += 1
    return pos


@numba.njit(cache=True, nogil=True)
def _coverage_range(start, end, ids, queries, r, lo, hi, left, leaf, packed, first, hit):
    stack = np.empty(_STACK, np.int64)
    r2 = r * r
    for t in range(start, end):
        q = ids[t]
        hit[t] = _any_hit(queries[q, 0], queries[q, 1], queries[q, 2], r, r2,
                          lo, hi, left, leaf, packed, first, stack)


@numba.njit(cache=True, nogil=True)
def _gather_range(start, end, ids, cov, last, radii, queries, lo, hi, left, leaf, centers, order, first,
                  count, counts):
    """Candidates of ``ids[start:end]``.

    Query ``ids[t]`` collects the leaves within ``radii[last[t] - 1]``, each
    stamped with the first iteration ``>= cov[t]`` whose radius reaches
    it, grouped by that iteration (stable in traversal order). Returns the
    chunk's concatenated (leaf, iteration) arrays; per-query sizes go to
    ``counts[t]``.
    """
    stack = np.empty(_STACK, np.int64)
    cap = 1024
    out_leaf = np.empty(cap, np.int64)
    out_iter = np.empty(cap, np.int64)
    buf_leaf = np.empty(64, np.int64)
    buf_d2 = np.empty(64)
    size = 0
    for t in range(start, end):
        q = ids[t]
        r = radii[last[t] - 1]
        while True:
            # one traversal; retry only if the scratch buffer was too small
            n = _collect(queries[q, 0], queries[q, 1], queries[q, 2], r, r * r, lo, hi, left, leaf,
                         centers, order, first, count, stack, buf_leaf, buf_d2, 0, True)
            if n <= buf_leaf.shape[0]:
                break
            buf_leaf = np.empty(2 * n, np.int64)
            buf_d2 = np.empty(2 * n)
        counts[t] = n
        if size + n > cap:
            cap = max(2 * cap, size + n)
            grown = np.empty(cap, np.int64)
            grown[:size] = out_leaf[:size]
            out_leaf = grown
            grown = np.empty(cap, np.int64)
            grown[:size] = out_iter[:size]
            out_iter = grown
        span = last[t] - cov[t] + 1
        cnt = np.zeros(span + 1, np.int64)
        stamp = np.empty(n, np.int64)
        for u in range(n):
            d2 = buf_d2[u]
            m = cov[t]
            while m < last[t] and d2 > radii[m - 1] * radii[m - 1]:
                m += 1
            stamp[u] = m
            cnt[m - cov[t] + 1] += 1
        for u in range(span):
            cnt[u + 1] += cnt[u]
        for u in range(n):
            slot = size + cnt[stamp[u] - cov[t]]
            cnt[stamp[u] - cov[t]] += 1
            out_leaf[slot] = buf_leaf[u]
            out_iter[slot] = stamp[u]
        size += n
    return out_leaf[:size], out_iter[:size]


def _gather(ids, first, last, radii, queries, bvh: CellBvh, threads: int):
    n = len(ids)
    counts = np.zeros(n, np.int64)
    args = (ids, first, last, radii, queries, *bvh.arrays, counts)
    bounds = _parallel.chunk_bounds(n, threads)
    parts = [None] * len(bounds)

    def work(i):
        parts[i] = _gather_range(*bounds[i], *args)

    _parallel.run_tasks(work, len(bounds), threads)
    offsets = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=offsets[1:])
    if parts:
        leaves = np.concatenate([p[0] for p in parts])
        found = np.concatenate([p[1] for p in parts])
    else:
        leaves = np.empty(0, np.int64)
        found = np.empty(0, np.int64)
    return offsets, leaves, found


def epsilon_neighbors(q, r: float, bvh: CellBvh, *, prefilter_only: bool = False) -> np.ndarray:
    """Leaf indices whose centre lies within Euclidean distance ``r`` of ``q``.

    With ``prefilter_only`` the Chebyshev (box-overlap) hits are returned
    instead, before the in-sphere test removes the box corners.
    """
    q = np.asarray(q, dtype=np.float64)
    stack = np.empty(_STACK, np.int64)
    args = (q[0], q[1], q[2], float(r), float(r) ** 2, *bvh.arrays, stack)
    sphere = not prefilter_only
    n = _collect(*args, np.empty(0, np.int64), np.empty(0), 0, sphere)
    out = np.empty(n, np.int64)
    _collect(*args, out, np.empty(n), 0, sphere)
    return np.sort(out)


def epsilon_neighbor_cells(q, r: float, bvh: CellBvh, space: IndexSpace) -> list[CellIndex]:
    return [CellIndex(*map(int, space.cell_keys[i])) for i in epsilon_neighbors(q, r, bvh)]


# ------------------------------------------------------------ broad phase

@dataclass(frozen=True)
class CandidateSet:
    query: int
    cells: tuple[tuple[CellIndex, int], ...]  # (cell, iteration found)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    radius: float
    active: int
    gray: int


@dataclass(eq=False)
class BroadPhaseResult:
    """Outcome of one broad phase.

    ``coverage[q]`` is the iteration that first covered query ``q``. The
    gray-zone survivors ``gray_ids`` (ascending) own the candidate leaves
    ``cand_leaf[cand_offsets[g]:cand_offsets[g + 1]]``, grouped by the
    (nondecreasing) iteration that found them.
    """

    r0: float
    alpha: float
    n_final: int
    coverage: np.ndarray
    gray_ids: np.ndarray
    cand_offsets: np.ndarray
    cand_leaf: np.ndarray
    cand_iter: np.ndarray
    restarts: int = 0
    post_sweeps: int = 2
    trace: list[TraceRow] = field(default_factory=list)
    reach: np.ndarray | None = None

    def radius(self, n: int) -> float:
        return radius_at(self.r0, self.alpha, n)

    @property
    def retired_ids(self) -> np.ndarray:
        mask = np.ones(len(self.coverage), bool)
        mask[self.gray_ids] = False
        return np.flatnonzero(mask)

    @property
    def materialized(self) -> bool:
        return self.cand_leaf is not None

    @property
    def n_candidates(self) -> int:
        return len(self.cand_leaf)

    def candidates_of(self, g: int) -> np.ndarray:
        return self.cand_leaf[self.cand_offsets[g]:self.cand_offsets[g + 1]]

    def candidate_sets(self, space: IndexSpace | None = None) -> dict[int, CandidateSet]:
        out = {}
        for g, q in enumerate(self.gray_ids.tolist()):
            sl = slice(self.cand_offsets[g], self.cand_offsets[g + 1])
            leaves = self.cand_leaf[sl].tolist()
            its = self.cand_iter[sl].tolist()
            if space is not None:
                keys = [CellIndex(*map(int, space.cell_keys[i])) for i in leaves]
            else:
                keys = leaves
            out[q] = CandidateSet(q, tuple(zip(keys, its)))
        return out


def radius_at(r0: float, alpha: float, n: int) -> float:
    return r0 + (n - 1) * alpha


def initial_radius_multiple(a_box: Aabb, b_box: Aabb, s: float) -> int:
    """Largest ``m`` with ``m * sqrt(3)`` not above half the centre distance
    (in cells); 1 when the boxes overlap."""
    overlap = all(a_lo <= b_hi and b_lo <= a_hi
                  for a_lo, a_hi, b_lo, b_hi in zip(a_box.min, a_box.max, b_box.min, b_box.max))
    if overlap:
        return 1
    half = 0.5 * math.dist(a_box.center, b_box.center) / s
    return max(1, int(math.floor(half / SQRT3)))


def resolve_r0_multiple(policy, queries_points: np.ndarray, target_points: np.ndarray, s: float) -> int:
    """``auto`` | ``sqrt3`` | positive integer multiple of sqrt(3)."""
    if policy in (None, "auto"):
        return initial_radius_multiple(aabb_of(queries_points), aabb_of(target_points), s)
    if policy == "sqrt3":
        return 1
    m = int(policy)
    if m < 1:
        raise ValueError(f"r0 multiple must be >= 1, got {policy}")
    return m


def broad_phase(queries: np.ndarray, bvh: CellBvh, r0: float, alpha: float = SQRT3, *,
                threads: int = 1, post_sweeps: int = 2, restart: bool = True,
                trace=None, materialize: bool = True) -> BroadPhaseResult:
    """Expand the search radius ``r0, r0 + alpha, ...`` until every query has a
    neighbour, then gather candidates for the gray-zone survivors.

    ``queries`` holds one row per query id in the same units as the BVH.
    ``r0`` should be an integer multiple of ``alpha``; if the first sweep
    already covers everything the search restarts from ``r0`` halved so the
    final bracket keeps an uncovered lower radius. ``trace`` receives one
    ``TraceRow`` per iteration. With ``materialize=False`` the candidate
    arrays are left empty and only ``reach`` (the final sweep radius of each
    survivor) is filled, for consumers that traverse again themselves.
    """
    if r0 < alpha * (1 - 1e-12):
        raise ValueError(f"r0={r0} is below the increment {alpha}")
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    nq = len(queries)
    args = (queries, *bvh.arrays[:5], bvh.first)
    rows: list[TraceRow] = []
    restarts = 0
    while True:
        coverage = np.zeros(nq, np.int64)
        active = np.arange(nq, dtype=np.int64)
        rows.clear()
        n = 0
        while active.size:
            n += 1
            r = radius_at(r0, alpha, n)
            hit = np.zeros(active.size, np.bool_)
            ids = active
            _parallel.run_chunked(lambda a, b: _coverage_range(a, b, ids, *args[:1], r, *args[1:], hit),
                                  active.size, threads)
            coverage[active[hit]] = n
            active = active[~hit]
            gray = int(np.count_nonzero(coverage >= max(1, n - 2)))
            rows.append(TraceRow(n, r, int(active.size), gray))
        if restart and n == 1 and nq and r0 > alpha * (1 + 1e-9):
            m = max(1, int(round(r0 / alpha)) // 2)
            r0 = m * alpha
            restarts += 1
            continue
        break
    n_final = n
    gray_ids = np.flatnonzero(coverage >= max(1, n_final - 2)).astype(np.int64)
    radii = np.array([radius_at(r0, alpha, m) for m in range(1, n_final + post_sweeps + 1)])
    for extra in range(1, post_sweeps + 1):
        sweeping = int(np.count_nonzero(coverage[gray_ids] + post_sweeps >= n_final + extra))
        rows.append(TraceRow(n_final + extra, radii[n_final + extra - 1], 0, sweeping))
    first = coverage[gray_ids]
    reach = radii[first + post_sweeps - 1]
    if materialize:
        offsets, leaves, found = _gather(gray_ids, first, first + post_sweeps, radii, queries, bvh,
                                         threads)
    else:
        offsets = leaves = found = None
    if trace is not None:
        for row in rows:
            trace(row)
    return BroadPhaseResult(r0, alpha, n_final, coverage, gray_ids, offsets, leaves, found,
                            restarts, post_sweeps, rows, reach)

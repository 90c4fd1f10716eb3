"""Benchmark orchestration: run modes, the no-index-space ablation, the
randomized oracle check, and CSV reporting."""
from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import _parallel
from .broad_search import broad_phase, build_bvh_over, resolve_r0_multiple
from .core import SQRT3, DegenerateGridError
from .index_space import build_grid
from .mesh_io import PointCloud, Scene, SceneSpec, build_scene
from .narrow_phase import (HausdorffConfig, HausdorffResult, OneSided, _combine, brute_force_hausdorff,
                           brute_force_one_sided, hausdorff, refine_fused, refine_one_sided)

MODES = ("full", "nois", "brute")


def _nois_side(a: PointCloud, b: PointCloud, cfg: HausdorffConfig, side: str) -> OneSided:
    threads = _parallel.resolve_threads(cfg.threads)
    t0 = time.perf_counter()
    grid = build_grid(b, cfg.k)
    step = grid.s * SQRT3
    bvh = build_bvh_over(b.points, step)
    t1 = time.perf_counter()
    m = resolve_r0_multiple(cfg.r0, a.points, b.points, grid.s)
    tracer = None if cfg.trace is None else (lambda row: cfg.trace(side, row))
    # bands are exact here, so no post-coverage sweeps are needed
    bp = broad_phase(a.points, bvh, m * step, step, threads=threads, post_sweeps=0, trace=tracer,
                     materialize=not cfg.fused)
    t2 = time.perf_counter()
    if cfg.fused:
        res = refine_fused(bp, bvh, a.points, a, b, None, threads, cfg.early_exit)
    else:
        n = len(b)
        res = refine_one_sided(bp, a, b, np.arange(n + 1), np.arange(n), threads)
    t3 = time.perf_counter()
    res.stats.update({"iterations": bp.n_final, "restarts": bp.restarts, "r0_multiple": int(round(bp.r0 / step)),
                      "cells": len(b), "gray": len(bp.gray_ids),
                      "t_index": t1 - t0, "t_broad": t2 - t1, "t_narrow": t3 - t2})
    return res


def run_no_index_space(a: PointCloud, b: PointCloud, cfg: HausdorffConfig | None = None) -> HausdorffResult:
    """Ablation: one BVH leaf per target point, searched directly in object space.

    Initial radius and increment are the full pipeline's in object units,
    i.e. multiples of ``cell_size * sqrt(3)`` for the same bit count.
    """
    cfg = cfg or HausdorffConfig()
    t0 = time.perf_counter()
    sides, fallback = {}, []
    for name, q, t in (("AB", a, b), ("BA", b, a)):
        try:
            sides[name] = _nois_side(q, t, cfg, name)
        except DegenerateGridError:
            fallback.append(name)
            ts = time.perf_counter()
            res = brute_force_one_sided(q, t, _parallel.resolve_threads(cfg.threads))
            res.stats.update({"t_index": 0.0, "t_broad": 0.0, "t_narrow": time.perf_counter() - ts,
                              "iterations": 0})
            sides[name] = res
    stats = {"mode": "nois", "k": cfg.k, "fallback": fallback, "total": time.perf_counter() - t0,
             "AB": sides["AB"].stats, "BA": sides["BA"].stats}
    return _combine(sides["AB"], sides["BA"], a, b, stats)


def run_mode(a: PointCloud, b: PointCloud, mode: str, cfg: HausdorffConfig | None = None) -> HausdorffResult:
    cfg = cfg or HausdorffConfig()
    if mode == "full":
        return hausdorff(a, b, cfg)
    if mode == "nois":
        return run_no_index_space(a, b, cfg)
    if mode == "brute":
        return brute_force_hausdorff(a, b, cfg.threads)
    raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


# ------------------------------------------------------------- records

CSV_COLUMNS = (
    "scene", "note", "mode", "k", "rep", "n_a", "n_b",
    "t_index", "t_broad", "t_narrow", "t_total",
    "H", "h_ab", "h_ba", "witness_side", "witness_query", "witness_target",
    "iters_ab", "iters_ba", "restarts_ab", "restarts_ba", "gray_ab", "gray_ba",
    "nois_time_reduction",
)


@dataclass
class BenchRecord:
    scene: str
    note: str
    mode: str
    k: int | None
    rep: int
    n_a: int
    n_b: int
    t_index: float
    t_broad: float
    t_narrow: float
    t_total: float
    H: float
    h_ab: float
    h_ba: float
    witness_side: str
    witness_query: int
    witness_target: int
    iters_ab: int
    iters_ba: int
    restarts_ab: int
    restarts_ba: int
    gray_ab: int
    gray_ba: int
    nois_time_reduction: float | None = None

    @classmethod
    def from_result(cls, scene: Scene, mode: str, k, rep: int, res: HausdorffResult) -> "BenchRecord":
        ab, ba = res.stats["AB"], res.stats["BA"]
        phase = {p: ab.get(f"t_{p}", 0.0) + ba.get(f"t_{p}", 0.0) for p in ("index", "broad", "narrow")}
        q, t, side = res.witness
        return cls(scene.label, scene.note, mode, k if mode != "brute" else None, rep, len(scene.a), len(scene.b),
                   phase["index"], phase["broad"], phase["narrow"], res.stats["total"],
                   res.H, res.h_ab, res.h_ba, side, q, t,
                   ab.get("iterations", 0), ba.get("iterations", 0),
                   ab.get("restarts", 0), ba.get("restarts", 0), ab.get("gray", 0), ba.get("gray", 0))

    def row(self) -> list[str]:
        out = []
        for name in CSV_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float) and name.startswith("t_"):
                out.append(f"{v:.3f}")  # seconds, millisecond resolution
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


def write_csv(records, fh) -> None:
    """RFC-4180 output: header row, CRLF line ends, minimal quoting."""
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())


# ------------------------------------------------------------- bench

@dataclass
class BenchConfig:
    scenes: list[SceneSpec]
    ks: tuple[int, ...] = (7,)
    r0: str = "auto"
    repetitions: int = 1
    modes: tuple[str, ...] = ("full",)
    threads: int | str = 1
    seed: int = 0
    output: str | None = None

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        for k in self.ks:
            if not 1 <= k <= 10:
                raise ValueError(f"k values must lie in [1, 10], got {k}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}; choose from {MODES}")


def run_bench(cfg: BenchConfig, log=None) -> list[BenchRecord]:
    """One record per (scene, mode, k, repetition); brute rows ignore k and run once per rep."""
    records = []
    for spec in cfg.scenes:
        scene = build_scene(spec)
        for rep in range(cfg.repetitions):
            for mode in cfg.modes:
                ks = (None,) if mode == "brute" else cfg.ks
                for k in ks:
                    hc = HausdorffConfig(k=k or 7, r0=cfg.r0, threads=cfg.threads)
                    res = run_mode(scene.a, scene.b, mode, hc)
                    rec = BenchRecord.from_result(scene, mode, k, rep, res)
                    records.append(rec)
                    if log:
                        log(f"{scene.label} {mode} k={k if k is not None else '-'} rep={rep} "
                            f"H={res.H!r} t={rec.t_total:.3f}s")
    _fill_reduction(records)
    return records


def _fill_reduction(records) -> None:
    nois = {(r.scene, r.k, r.rep): r.t_total for r in records if r.mode == "nois"}
    for r in records:
        t = nois.get((r.scene, r.k, r.rep))
        if r.mode == "full" and t:
            r.nois_time_reduction = 1.0 - r.t_total / t


def summarize(records) -> list[dict]:
    """min and median total time per (scene, mode, k)."""
    groups = {}
    for r in records:
        groups.setdefault((r.scene, r.mode, r.k), []).append(r)
    out = []
    for (scene, mode, k), rs in groups.items():
        ts = [r.t_total for r in rs]
        out.append({"scene": scene, "mode": mode, "k": k, "reps": len(rs), "min": min(ts),
                    "median": statistics.median(ts), "H": rs[0].H,
                    "agree": all(_close(r.H, rs[0].H) for r in rs)})
    return out


def _close(x: float, y: float, rel: float = 1e-9) -> bool:
    return abs(x - y) <= rel * max(abs(x), abs(y), 1e-300)


# ------------------------------------------------------------- verify

FAMILIES = ("uniform", "gaussian", "coplanar", "disjoint")


def random_instance(rng: np.random.Generator, family: str, max_size: int) -> tuple[PointCloud, PointCloud]:
    na, nb = (int(v) for v in rng.integers(1, max_size + 1, size=2))
    if family == "uniform":
        a = rng.uniform(-1, 1, size=(na, 3)) * rng.uniform(0.1, 10, size=3)
        b = rng.uniform(-1, 1, size=(nb, 3)) * rng.uniform(0.1, 10, size=3)
    elif family == "gaussian":
        c = rng.uniform(-5, 5, size=(int(rng.integers(1, 6)), 3))
        a = c[rng.integers(0, len(c), size=na)] + rng.normal(scale=0.3, size=(na, 3))
        b = c[rng.integers(0, len(c), size=nb)] + rng.normal(scale=0.3, size=(nb, 3))
    elif family == "coplanar":
        # both clouds in one tilted plane
        basis = np.linalg.qr(rng.normal(size=(3, 3)))[0][:, :2]
        off = rng.normal(size=3)
        a = rng.uniform(-1, 1, size=(na, 2)) @ basis.T + off
        b = rng.uniform(-1, 1, size=(nb, 2)) @ basis.T + off
        if rng.random() < 0.5:  # axis-aligned too, so one grid axis collapses
            a[:, 2] = b[:, 2] = off[2]
    elif family == "disjoint":
        a = rng.uniform(-1, 1, size=(na, 3))
        shift = _unit(rng) * rng.uniform(2.5, 20)
        b = rng.uniform(-1, 1, size=(nb, 3)) + shift
    else:
        raise ValueError(f"unknown family {family!r}")
    return PointCloud(a, label=f"{family}-A"), PointCloud(b, label=f"{family}-B")


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


@dataclass
class VerifyOutcome:
    index: int
    family: str
    k: int
    n_a: int
    n_b: int
    H: float
    oracle: float
    witness_ok: bool
    same_witness: bool

    @property
    def passed(self) -> bool:
        return _close(self.H, self.oracle) and self.witness_ok


@dataclass
class VerifyReport:
    outcomes: list[VerifyOutcome] = field(default_factory=list)

    @property
    def n_pass(self) -> int:
        return sum(o.passed for o in self.outcomes)

    @property
    def ok(self) -> bool:
        return self.n_pass == len(self.outcomes)


def witness_valid(res: HausdorffResult, a: PointCloud, b: PointCloud) -> bool:
    q, t, side = res.witness
    p, r = (a.points[q], b.points[t]) if side == "AB" else (b.points[q], a.points[t])
    d = float(np.sqrt(np.sum((p - r) ** 2)))
    return _close(d, res.H) and res.H == max(res.h_ab, res.h_ba)


def run_verify(instances: int, seed: int = 0, max_size: int = 2000, mode: str = "full",
               ks=(4, 5, 6, 7, 8), threads: int | str = 1, perturb: bool = False, log=None) -> VerifyReport:
    """Randomized check of ``mode`` against the all-pairs oracle.

    Families cycle per instance and k cycles over ``ks``. ``perturb`` nudges
    the first result so the harness itself can be seen to fail.
    """
    rng = np.random.default_rng(seed)
    report = VerifyReport()
    for i in range(instances):
        fam = FAMILIES[i % len(FAMILIES)]
        k = ks[(i // len(FAMILIES)) % len(ks)]
        a, b = random_instance(rng, fam, max_size)
        res = run_mode(a, b, mode, HausdorffConfig(k=k, threads=threads))
        ref = brute_force_hausdorff(a, b, threads)
        H = res.H * (1 + 1e-6) + 1e-12 if perturb and i == 0 else res.H
        o = VerifyOutcome(i, fam, k, len(a), len(b), H, ref.H, witness_valid(res, a, b),
                          res.witness == ref.witness)
        report.outcomes.append(o)
        if log:
            log(f"{i:4d} {fam:9s} k={k} |A|={len(a):5d} |B|={len(b):5d} H={H!r} oracle={ref.H!r} "
                f"{'PASS' if o.passed else 'FAIL'}")
    return report

"""hdist command line: compute, verify, bench.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import sys

from . import bench
from .core import HdistError
from .index_space import build_index_space, dump_index
from .mesh_io import SCENE_KINDS, SceneSpec, build_scene
from .narrow_phase import HausdorffConfig

EXIT_OK, EXIT_MISMATCH, EXIT_INPUT = 0, 1, 2


def r0_policy(text: str) -> str:
    if text in ("auto", "sqrt3"):
        return text
    try:
        m = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected auto, sqrt3 or a positive integer, got {text!r}")
    if m < 1:
        raise argparse.ArgumentTypeError("r0 multiple must be >= 1")
    return str(m)


def threads_arg(text: str):
    if text == "max":
        return "max"
    n = int(text)
    if n < 0:
        raise argparse.ArgumentTypeError("threads must be >= 0 (0 or 'max' = all cores)")
    return n


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r0", type=r0_policy, default="auto", help="auto | sqrt3 | integer multiple of sqrt(3)")
    p.add_argument("--threads", type=threads_arg, default=1, help="worker threads; 0 or 'max' for all cores")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("obj", "ply"), default=None, help="override extension-based detection")


def _scene_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("sources", nargs="+", help="OBJ/PLY paths or synth:KIND:N[:SEED]")
    p.add_argument("--scene", choices=SCENE_KINDS, default=None,
                   help="default: translation for one source, raw-pair for two")
    p.add_argument("--axis", choices=("x", "y", "z"), default="x")
    p.add_argument("--ratio", type=float, default=0.5, help="translation ratio of the axis extent")
    p.add_argument("--target-count", type=int, default=None, help="decimation stand-in size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdist", description="Exact two-way Hausdorff distance between point clouds.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("compute", help="H(A,B) for one pair")
    _scene_args(c)
    _common(c)
    c.add_argument("--k", type=int, default=7, help="bit count (cells on the longest axis = 2^k)")
    c.add_argument("--mode", choices=bench.MODES, default="full")
    c.add_argument("--csv", metavar="PATH", help="write the result as a one-row CSV")
    c.add_argument("--trace", action="store_true", help="stream per-iteration CSV to stderr")
    c.add_argument("--dump-index", metavar="PATH", help="write the index space over B (ix iy iz count)")

    v = sub.add_parser("verify", help="randomized comparison against the all-pairs oracle")
    _common(v)
    v.add_argument("--instances", type=int, default=200)
    v.add_argument("--max-size", type=int, default=2000)
    v.add_argument("--k", type=int, nargs="+", default=[4, 5, 6, 7, 8], help="bit counts to cycle through")
    v.add_argument("--mode", choices=("full", "nois"), default="full")
    v.add_argument("--force-mismatch", action="store_true", help="perturb one result to check the harness")
    v.add_argument("--csv", metavar="PATH", help="per-instance results")
    v.add_argument("--quiet", action="store_true")

    b = sub.add_parser("bench", help="timing sweep; one CSV row per (scene, mode, k, rep)")
    _scene_args(b)
    _common(b)
    b.add_argument("--k", type=int, nargs="+", default=[7])
    b.add_argument("--mode", choices=bench.MODES, nargs="+", default=["full", "nois"])
    b.add_argument("--reps", type=int, default=1)
    b.add_argument("--csv", metavar="PATH", help="default: stdout")
    return ap


def _spec(args) -> SceneSpec:
    kind = args.scene or ("translation" if len(args.sources) == 1 else "raw-pair")
    return SceneSpec(kind, tuple(args.sources), axis=args.axis, ratio=args.ratio,
                     target_count=args.target_count, seed=args.seed, format=args.format)


def _tracer():
    w = csv.writer(sys.stderr, lineterminator="\n")
    w.writerow(("side", "iteration", "radius", "active", "gray"))

    def emit(side, row):
        w.writerow((side, row.iteration, repr(row.radius), row.active, row.gray))
    return emit


def cmd_compute(args) -> int:
    scene = build_scene(_spec(args))
    if scene.note:
        print(f"note: B is a {scene.note}")
    cfg = HausdorffConfig(k=args.k, r0=args.r0, threads=args.threads, trace=_tracer() if args.trace else None)
    if args.dump_index:
        with open(args.dump_index, "w") as fh:
            dump_index(build_index_space(scene.b, args.k), fh)
    res = bench.run_mode(scene.a, scene.b, args.mode, cfg)
    q, t, side = res.witness
    print(f"scene   {scene.label}  |A|={len(scene.a)} |B|={len(scene.b)}  mode={args.mode}")
    print(f"H       {res.H!r}")
    print(f"h_ab    {res.h_ab!r}")
    print(f"h_ba    {res.h_ba!r}")
    pa, pb = res.witness_points
    print(f"witness {side} query={q} target={t}  {pa} -> {pb}")
    for name in ("AB", "BA"):
        s = res.stats[name]
        print(f"{name}      index {s.get('t_index', 0):.3f}s  broad {s.get('t_broad', 0):.3f}s  "
              f"narrow {s.get('t_narrow', 0):.3f}s  iterations {s.get('iterations', 0)}")
    print(f"total   {res.stats['total']:.3f}s")
    if res.stats.get("fallback"):
        print(f"fallback: degenerate target grid, brute force used for {','.join(res.stats['fallback'])}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            bench.write_csv([bench.BenchRecord.from_result(scene, args.mode, args.k, 0, res)], fh)
    return EXIT_OK


def cmd_verify(args) -> int:
    log = None if args.quiet else print
    rep = bench.run_verify(args.instances, seed=args.seed, max_size=args.max_size, mode=args.mode,
                           ks=tuple(args.k), threads=args.threads, perturb=args.force_mismatch, log=log)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(("index", "family", "k", "n_a", "n_b", "H", "oracle", "witness_ok", "same_witness", "pass"))
            for o in rep.outcomes:
                w.writerow((o.index, o.family, o.k, o.n_a, o.n_b, repr(o.H), repr(o.oracle),
                            int(o.witness_ok), int(o.same_witness), int(o.passed)))
    n = len(rep.outcomes)
    print(f"verify: {rep.n_pass}/{n} passed{' (vacuous)' if n == 0 else ''}")
    return EXIT_OK if rep.ok else EXIT_MISMATCH


def cmd_bench(args) -> int:
    cfg = bench.BenchConfig([_spec(args)], ks=tuple(args.k), r0=args.r0, repetitions=args.reps,
                            modes=tuple(args.mode), threads=args.threads, seed=args.seed, output=args.csv)
    records = bench.run_bench(cfg, log=lambda m: print(m, file=sys.stderr))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)
    for s in bench.summarize(records):
        k = "-" if s["k"] is None else s["k"]
        print(f"{s['scene']} {s['mode']} k={k} reps={s['reps']} min={s['min']:.3f}s "
              f"median={s['median']:.3f}s H={s['H']!r}", file=sys.stderr)
    hs = [r.H for r in records]
    if not all(bench._close(h, hs[0]) for h in hs):
        print("error: H differs across modes/k", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return {"compute": cmd_compute, "verify": cmd_verify, "bench": cmd_bench}[args.cmd](args)
    except (HdistError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Translation sweep: full pipeline vs no-index-space vs all-pairs.

Writes one CSV row per (ratio, mode, rep) and prints min totals per mode.
Pass a PLY/OBJ path (e.g. a Stanford model) or a synth:KIND:N source.
"""
import argparse
import sys

from hdist.bench import BenchConfig, run_bench, summarize, write_csv
from hdist.mesh_io import SceneSpec


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("source", nargs="?", default="synth:blob:100000:1")
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--k", type=int, nargs="+", default=[6])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--brute", action="store_true", help="also time the all-pairs scan (slow)")
    ap.add_argument("--threads", default=1)
    ap.add_argument("--out", default=None, help="CSV path; default stdout")
    args = ap.parse_args(argv)

    modes = ("full", "nois", "brute") if args.brute else ("full", "nois")
    scenes = [SceneSpec("translation", (args.source,), axis="x", ratio=r) for r in args.ratios]
    cfg = BenchConfig(scenes, ks=tuple(args.k), repetitions=args.reps, modes=modes,
                      threads=args.threads, output=args.out)
    records = run_bench(cfg, log=lambda m: print(m, file=sys.stderr))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_csv(records, fh)
    else:
        write_csv(records, sys.stdout)
    for s in summarize(records):
        print(f"{s['scene']} {s['mode']} k={s['k']} min={s['min']:.3f}s median={s['median']:.3f}s",
              file=sys.stderr)


if __name__ == "__main__":
    main()

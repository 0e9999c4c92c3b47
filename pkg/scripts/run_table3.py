"""Wall time of T* and T~* on large lattices (covering construction timed separately)."""
import argparse
import sys
from pathlib import Path

from corrscan.experiments import preset, run_timing_study, speedups

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--sizes", default="256x256,512x256,512x512")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "results" / "table3.csv")
    args = p.parse_args()
    doms = [tuple(int(v) for v in s.split("x")) for s in args.sizes.split(",")]
    cfg = preset("table3", domains=doms)
    table = run_timing_study(cfg, progress=lambda s: print(s, file=sys.stderr, flush=True), repeats=args.repeats)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out)
    for dom, s in speedups(table).items():
        print(f"{dom}: speedup {s:.1f}x")
    print(f"wrote {args.out}")

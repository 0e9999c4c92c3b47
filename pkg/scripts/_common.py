"""Shared argument handling for the study scripts."""
import argparse
import sys
from pathlib import Path

from corrscan.experiments import preset, run_power_study

RESULTS = Path(__file__).resolve().parent.parent / "results"


def parser(desc):
    p = argparse.ArgumentParser(description=desc)
    p.add_argument("--runs", type=int, default=500)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    return p


def run(study, args, **extra):
    cfg = preset(study, runs=args.runs, B=args.B, seed=args.seed, threads=args.threads, **extra)
    table = run_power_study(cfg, progress=lambda s: print(s, file=sys.stderr, flush=True))
    out = args.out or RESULTS / f"{study}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out)
    return table, out

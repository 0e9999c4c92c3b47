"""``corrscan`` command line.

Exit codes: 0 completed (whatever the statistical decision), 1 usage error,
2 data error, 3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import KINDS, NullDistribution, calibrate, decide, rng_for, simulate_alternative
from .errors import CorrscanError, DataError, DomainError, FamilyError, FingerprintMismatch, RegionError
from .experiments import (ALIASES, STUDIES, ExperimentConfig, emit_figure_data, parse_shape, preset,
                          run_power_study, run_timing_study, speedups)
from .io import file_digest, read_mask, read_raster, write_csv, write_pgm
from .lattice import ChannelPair, build_domain, otsu_mask
from .regions.family import FamilySpec, RegionFamily
from .regions.shapes import rasterize
from .scanstat import scan_fast, scan_full

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InvariantViolation(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class RunManifest:
    """Provenance block embedded in every JSON output."""

    def __init__(self, command: str, config: dict, inputs: dict, seed):
        self.command = command
        self.config = config
        blob = json.dumps(config, sort_keys=True, default=str).encode()
        self.config_hash = hashlib.sha256(blob).hexdigest()
        self.inputs = {k: file_digest(v) for k, v in inputs.items() if v is not None}
        self.seed = seed
        self.version = __version__
        self.started = _now()
        self.finished = None

    def to_dict(self) -> dict:
        return {"command": self.command, "config_hash": self.config_hash, "config": self.config,
                "inputs": self.inputs, "seed": self.seed, "version": self.version,
                "started": self.started, "finished": self.finished or _now()}


def _threads(args):
    t = args.threads if args.threads is not None else os.environ.get("CORRSCAN_THREADS")
    if t is None:
        return 1
    try:
        t = int(t)
    except ValueError:
        raise UsageError(f"bad thread count {t!r}")
    if t < 1:
        raise UsageError("thread count must be >= 1")
    return t


def _family_spec(args) -> FamilySpec:
    if getattr(args, "family", None):
        try:
            return FamilySpec.from_json(args.family)
        except OSError as exc:
            raise DataError(f"cannot read family config: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"family config is not valid JSON: {exc}")
    return FamilySpec()


def _emit(obj, out):
    text = json.dumps(obj, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(f"not serializable: {type(o)}")


def _load_pair(args):
    x = read_raster(args.x)
    y = read_raster(args.y)
    if x.shape != y.shape:
        raise DataError(f"channel shapes differ: {x.shape} vs {y.shape}")
    H, W = x.shape
    mask = None
    if args.mask:
        mask = read_mask(args.mask)
        if mask.shape != x.shape:
            raise DataError(f"mask shape {mask.shape} differs from channels {x.shape}")
    if args.otsu:
        fg = otsu_mask(x) & otsu_mask(y)
        mask = fg if mask is None else (mask & fg)
    domain = build_domain(W, H, mask)
    return ChannelPair(domain, x, y)


def cmd_scan(args) -> int:
    spec = _family_spec(args)
    if args.stat is None:
        # follow the calibration when one is given
        kind = NullDistribution.load(args.calib).kind if args.calib else "fast"
        args.stat = "full" if kind == "lstar" else kind
    manifest = RunManifest("scan", {"family": spec.to_dict(), "stat": args.stat, "alpha": args.alpha,
                                    "otsu": args.otsu},
                           {"x": args.x, "y": args.y, "mask": args.mask, "family": args.family,
                            "calib": args.calib}, None)
    pair = _load_pair(args)
    family = RegionFamily(spec, pair.domain)
    nulldist = None
    if args.calib:
        nulldist = NullDistribution.load(args.calib, family.fingerprint())
        if nulldist.kind != args.stat and not (nulldist.kind == "lstar" and args.stat == "full"):
            raise UsageError(f"calibration is for statistic {nulldist.kind!r}, scan asked for {args.stat!r}")
    threads = _threads(args)
    rep = scan_fast(pair, family, threads) if args.stat == "fast" else scan_full(pair, family, threads)
    if rep.per_scale and rep.value != max(r["max"] for r in rep.per_scale):
        raise InvariantViolation("statistic differs from the maximum of its per-scale maxima")
    out = {"manifest": None, "domain": {"width": pair.domain.width, "height": pair.domain.height,
                                        "active": pair.domain.n},
           "fingerprint": family.fingerprint(), "report": rep.to_dict()}
    if nulldist is not None:
        observed = rep.lstar if nulldist.kind == "lstar" else rep.value
        out["outcome"] = decide(nulldist, observed, args.alpha).to_dict()
    out["manifest"] = manifest.to_dict()
    _emit(out, args.out)
    return EXIT_OK


def _calib_domain(args):
    if args.x and args.y:
        return _load_pair(args).domain
    if args.mask:
        m = read_mask(args.mask)
        return build_domain(m.shape[1], m.shape[0], m)
    if args.width and args.height:
        return build_domain(args.width, args.height)
    raise UsageError("give --width/--height, --mask, or --x/--y to fix the domain")


def cmd_calibrate(args) -> int:
    spec = _family_spec(args)
    if args.B < 100:
        raise UsageError(f"--B must be >= 100, got {args.B}")
    manifest = RunManifest("calibrate", {"family": spec.to_dict(), "stat": args.stat, "B": args.B,
                                         "width": args.width, "height": args.height, "otsu": args.otsu},
                           {"x": args.x, "y": args.y, "mask": args.mask, "family": args.family}, args.seed)
    domain = _calib_domain(args)
    family = RegionFamily(spec, domain)
    nd = calibrate(family, domain, args.B, args.seed, args.stat, _threads(args))
    out = nd.to_dict()
    out["manifest"] = manifest.to_dict()
    _emit(out, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    shape = parse_shape(args.shape)
    manifest = RunManifest("simulate", {"width": args.width, "height": args.height, "shape": shape.name,
                                        "rho": args.rho}, {}, args.seed)
    domain = build_domain(args.width, args.height)
    placed = shape.place(args.width, args.height, rng_for(args.seed, 0))
    region = rasterize(placed, domain)
    pair = simulate_alternative(domain, region, args.rho, np.random.SeedSequence(args.seed, spawn_key=(1,)))
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    if args.format == "pgm":
        # affine rescale to 16-bit; the statistics are affine invariant
        for name, a in (("x", pair.x), ("y", pair.y)):
            lo, hi = float(a.min()), float(a.max())
            write_pgm(outdir / f"{name}.pgm", np.round((a - lo) / (hi - lo) * 65535).astype(np.int64), 65535)
    else:
        write_csv(outdir / "x.csv", pair.x)
        write_csv(outdir / "y.csv", pair.y)
    truth = {"shape": {"kind": placed.kind, "params": placed.params()}, "size": region.size,
             "rho": args.rho, "intervals": region.intervals.tolist(), "manifest": manifest.to_dict()}
    _emit(truth, outdir / "truth.json")
    return EXIT_OK


def _parse_domains(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if "x" in item:
            w, h = item.split("x")
        else:
            w = h = item
        try:
            out.append((int(w), int(h)))
        except ValueError:
            raise UsageError(f"bad lattice size {item!r}")
    return out


def _experiment_config(args, study):
    if args.config:
        try:
            cfg = ExperimentConfig.from_json(args.config)
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}")
        except (TypeError, json.JSONDecodeError) as exc:
            raise UsageError(f"bad experiment config: {exc}")
        return cfg
    if study not in STUDIES and study not in ALIASES:
        raise UsageError(f"unknown study {study!r}; choose from {sorted(ALIASES) + list(STUDIES)}")
    over = {"seed": args.seed, "threads": _threads(args)}
    for name in ("runs", "B", "alpha"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "sizes", None):
        over["domains"] = _parse_domains(args.sizes)
    if getattr(args, "rhos", None):
        over["rhos"] = [float(r) for r in args.rhos.split(",")]
    if getattr(args, "family", None):
        over["family"] = _family_spec(args).to_dict()
    return preset(study, **over)


def _write_table(table, args, manifest, extra=None):
    if args.out:
        table.to_csv(args.out)
        summary = {"manifest": manifest.to_dict(), **table.to_json(), **(extra or {})}
        Path(args.out).with_suffix(".json").write_text(json.dumps(summary, indent=2, default=_json_default))
    else:
        import csv
        w = csv.DictWriter(sys.stdout, fieldnames=list(table.rows[0]) if table.rows else [])
        w.writeheader()
        w.writerows(table.rows)


def cmd_power(args) -> int:
    cfg = _experiment_config(args, args.study)
    if cfg.study == "timing":
        raise UsageError("use `bench` for the timing study")
    manifest = RunManifest("power", cfg.to_dict(), {"config": args.config}, cfg.seed)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    table = run_power_study(cfg, progress=log)
    _write_table(table, args, manifest)
    if args.figure_data and cfg.study in ("region-size", "lattice-size"):
        emit_figure_data(table, cfg.study, args.figure_data, args.plot)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _experiment_config(args, "timing")
    manifest = RunManifest("bench", cfg.to_dict(), {"config": args.config}, cfg.seed)
    log = (lambda s: print(s, file=sys.stderr)) if args.verbose else None
    table = run_timing_study(cfg, progress=log, repeats=args.repeats)
    _write_table(table, args, manifest, {"speedups": speedups(table)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="corrscan", description="Scan two channels for a correlated region.")
    p.add_argument("--version", action="version", version=f"corrscan {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $CORRSCAN_THREADS or 1)")
        sp.add_argument("--out", default=None, help="output path (default: stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    def data(sp, required):
        sp.add_argument("--x", required=required, help="first channel (.pgm or .csv)")
        sp.add_argument("--y", required=required, help="second channel (.pgm or .csv)")
        sp.add_argument("--mask", help="active-cell mask (nonzero = active)")
        sp.add_argument("--otsu", action="store_true",
                        help="restrict to the intersection of per-channel Otsu foregrounds")

    s = sub.add_parser("scan", help="compute T* or T~* and optionally test it")
    data(s, True)
    s.add_argument("--family", help="family config JSON")
    s.add_argument("--calib", help="null distribution JSON from `calibrate`")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--stat", choices=["full", "fast"], default=None,
                   help="default: the calibration's statistic, else fast")
    common(s)
    s.set_defaults(func=cmd_scan)

    c = sub.add_parser("calibrate", help="Monte Carlo null distribution")
    data(c, False)
    c.add_argument("--family", help="family config JSON")
    c.add_argument("--width", type=int)
    c.add_argument("--height", type=int)
    c.add_argument("--B", type=int, default=1000)
    c.add_argument("--stat", choices=list(KINDS), default="fast")
    common(c)
    c.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("simulate", help="write a synthetic channel pair with a planted region")
    m.add_argument("--width", type=int, required=True)
    m.add_argument("--height", type=int, required=True)
    m.add_argument("--shape", default="rect:10x10", help="rect:WxH, ellipse:AxB (semi-axes), triangle:PxQ")
    m.add_argument("--rho", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--format", choices=["csv", "pgm"], default="csv")
    m.add_argument("--out-dir", required=True)
    m.set_defaults(func=cmd_simulate)

    w = sub.add_parser("power", help="run a power study")
    w.add_argument("--study", required=True, help="table1 | table2 | figure4 | figure5 (or study id)")
    w.add_argument("--config", help="experiment config JSON (overrides --study presets)")
    w.add_argument("--family", help="family config JSON")
    w.add_argument("--runs", type=int)
    w.add_argument("--B", type=int)
    w.add_argument("--alpha", type=float)
    w.add_argument("--rhos", help="comma-separated correlation grid")
    w.add_argument("--sizes", help="comma-separated lattice sizes, e.g. 32,64x128")
    w.add_argument("--figure-data", help="tidy CSV for the figure studies")
    w.add_argument("--plot", help="optional PNG for the figure studies")
    w.add_argument("--verbose", action="store_true")
    common(w)
    w.set_defaults(func=cmd_power)

    b = sub.add_parser("bench", help="time the full and fast scans")
    b.add_argument("--sizes", help="comma-separated lattice sizes, e.g. 256,256x512,512")
    b.add_argument("--config", help="experiment config JSON")
    b.add_argument("--family", help="family config JSON")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--verbose", action="store_true")
    common(b)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"corrscan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FamilyError, ValueError) as exc:
        print(f"corrscan: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, RegionError, FingerprintMismatch, OSError) as exc:
        print(f"corrscan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantViolation, CorrscanError, AssertionError) as exc:
        print(f"corrscan: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())

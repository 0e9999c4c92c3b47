"""Simulation studies: power by shape, full versus fast scan, region size,
lattice size, and scan timing."""
from __future__ import annotations

import csv
import json
import math
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibrate import calibrate_many, rng_for, scan_kinds, seed_sequence, simulate_alternative, simulate_null
from .errors import DataError
from .lattice import build_domain, build_moment_tables
from .regions.family import FamilySpec, RegionFamily, normalize_rows
from .regions.shapes import Ellipse, Polygon, Rectangle, rasterize, shape_rows
from .scanstat import fast_plan, resolve_threads, scan_fast, scan_full

METHODS = {"T*": "full", "T~*": "fast", "L*": "lstar"}
STUDIES = ("shape-power", "full-vs-fast", "region-size", "lattice-size", "timing")
ALIASES = {"table1": "shape-power", "table2": "full-vs-fast", "figure4": "region-size",
           "figure5": "lattice-size", "table3": "timing"}


@dataclass(frozen=True)
class ShapeSpec:
    """A correlated region to plant: ``rect`` (w, h), ``ellipse`` (a, b) semi-axes,
    ``triangle`` (leg, leg) right triangle."""

    kind: str
    dims: tuple

    def __post_init__(self):
        if self.kind not in ("rect", "ellipse", "triangle"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(float(d) if self.kind == "ellipse" else int(d)
                                               for d in self.dims))

    @property
    def name(self) -> str:
        return f"{self.kind}:{'x'.join(str(d) for d in self.dims)}"

    @property
    def family_kind(self) -> str:
        return {"rect": "rect", "ellipse": "ellipse", "triangle": "polygon"}[self.kind]

    def variants(self):
        """Shapes anchored near the origin, one per orientation."""
        if self.kind == "rect":
            w, h = self.dims
            return [Rectangle(0, 0, w, h)]
        if self.kind == "ellipse":
            a, b = max(self.dims), min(self.dims)
            return [Ellipse(0.0, 0.0, a, b, 0.0), Ellipse(0.0, 0.0, a, b, math.pi / 2)]
        p, q = self.dims
        out = []
        for u, v in ((p, q), (q, p)):
            for corner in ((0, 0), (u, 0), (0, v), (u, v)):
                cx, cy = corner
                ox = u if cx == 0 else 0
                oy = v if cy == 0 else 0
                out.append(Polygon(((cx, cy), (ox, cy), (cx, oy))))
        return out

    def place(self, width: int, height: int, rng: np.random.Generator):
        """Uniform orientation and uniform placement keeping the raster inside the lattice."""
        variants = self.variants()
        shape = variants[int(rng.integers(len(variants)))]
        rows = shape_rows(shape)
        _, (ay, ax), (h, w) = normalize_rows(rows)
        if h > height or w > width:
            raise DataError(f"{self.name} does not fit a {width}x{height} lattice")
        oy = int(rng.integers(height - h + 1))
        ox = int(rng.integers(width - w + 1))
        return _translate(shape, ox - ax, oy - ay)


def _translate(shape, dx, dy):
    if isinstance(shape, Rectangle):
        return Rectangle(shape.x0 + dx, shape.y0 + dy, shape.w, shape.h)
    if isinstance(shape, Ellipse):
        return Ellipse(shape.cx + dx, shape.cy + dy, shape.a, shape.b, shape.theta)
    return shape.translated(dx, dy)


def parse_shape(text: str) -> ShapeSpec:
    """``rect:10x10``, ``ellipse:6.36x4.94``, ``triangle:10x20``."""
    kind, _, dims = text.partition(":")
    return ShapeSpec(kind, tuple(float(d) for d in dims.split("x")))


@dataclass
class ExperimentConfig:
    study: str
    domains: list
    shapes: list
    rhos: list = field(default_factory=lambda: [0.2, 0.4])
    methods: list = field(default_factory=lambda: ["T*"])
    runs: int = 500
    B: int = 1000
    alpha: float = 0.05
    seed: int = 20240601
    family: dict = field(default_factory=dict)
    threads: int | None = None

    def __post_init__(self):
        self.study = ALIASES.get(self.study, self.study)
        if self.study not in STUDIES:
            raise ValueError(f"unknown study {self.study!r}")
        self.domains = [tuple(int(v) for v in d) for d in self.domains]
        self.shapes = [s if isinstance(s, ShapeSpec) else
                       (parse_shape(s) if isinstance(s, str) else ShapeSpec(s["kind"], tuple(s["dims"])))
                       for s in self.shapes]
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
        if self.study != "timing" and self.runs < 100:
            raise ValueError(f"power estimates need runs >= 100, got {self.runs}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shapes"] = [s.name for s in self.shapes]
        d["domains"] = [list(x) for x in self.domains]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def preset(name: str, **overrides) -> ExperimentConfig:
    """Configurations of the five standard studies."""
    study = ALIASES.get(name, name)
    base = {
        "shape-power": dict(domains=[(32, 32)],
                            shapes=["rect:10x10", "ellipse:6.36x4.94", "triangle:10x20"],
                            rhos=[0.2, 0.4], methods=["T*", "L*"]),
        "full-vs-fast": dict(domains=[(64, 64)], shapes=["rect:10x10"],
                             rhos=[0.2, 0.4, 0.6, 0.8], methods=["T*", "T~*"]),
        "region-size": dict(domains=[(64, 64)],
                            shapes=["rect:5x5", "rect:10x10", "rect:20x20", "rect:40x40"],
                            rhos=[0.1, 0.2, 0.3, 0.4, 0.5], methods=["T~*"]),
        "lattice-size": dict(domains=[(32, 32), (64, 64), (128, 128)], shapes=["rect:10x10"],
                             rhos=[0.2, 0.3, 0.4, 0.5, 0.6], methods=["T~*"]),
        "timing": dict(domains=[(256, 256), (512, 256), (512, 512)], shapes=["rect:10x10"],
                       rhos=[0.5], methods=["T*", "T~*"], runs=1),
    }
    if study not in base:
        raise ValueError(f"unknown study {name!r}")
    cfg = dict(base[study], study=study)
    cfg.update(overrides)
    return ExperimentConfig(**cfg)


COLUMNS = ["study", "shape", "domain", "size", "rho", "method", "power", "runs", "wall_s", "cover_s"]


@dataclass
class PowerTable:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, **row):
        key = tuple(row[c] for c in ("study", "shape", "domain", "size", "rho", "method"))
        if any(self._key(r) == key for r in self.rows):
            raise ValueError(f"duplicate power-table row {key}")
        p = row.get("power")
        if p is not None and not (isinstance(p, float) and math.isnan(p)) and not 0 <= p <= 1:
            raise ValueError(f"power {p} outside [0, 1]")
        self.rows.append({c: row.get(c) for c in COLUMNS})

    @staticmethod
    def _key(r):
        return (r["study"], r["shape"], r["domain"], r["size"], r["rho"], r["method"])

    def select(self, **where) -> list:
        return [r for r in self.rows if all(r[k] == v for k, v in where.items())]

    def power(self, **where) -> float:
        hits = self.select(**where)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {where}")
        return hits[0]["power"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS)
            w.writeheader()
            w.writerows(self.rows)

    @classmethod
    def from_csv(cls, path) -> "PowerTable":
        t = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                for c in ("size", "runs"):
                    r[c] = int(r[c]) if r[c] not in ("", None) else None
                for c in ("rho", "power", "wall_s", "cover_s"):
                    r[c] = float(r[c]) if r[c] not in ("", None) else None
                t.rows.append(r)
        return t

    def to_json(self) -> dict:
        return {"meta": self.meta, "rows": self.rows}


def _key_int(*parts) -> int:
    return zlib.crc32("|".join(str(p) for p in parts).encode())


def _family_for(shape: ShapeSpec, domain, overrides: dict) -> RegionFamily:
    d = {"kind": shape.family_kind}
    if shape.kind == "triangle":
        d["variant"] = "right"
    d.update(overrides)
    return RegionFamily(FamilySpec.from_dict(d), domain)


def _map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def run_power_study(config: ExperimentConfig, progress=None) -> PowerTable:
    """Power of each method at each (domain, shape, rho) cell.

    Each (domain, family) is calibrated once from ``B`` null replicates; every
    run plants the shape uniformly at random and records whether each method
    rejects at level ``alpha``.
    """
    if config.study == "timing":
        raise ValueError("use run_timing_study for the timing study")
    threads = resolve_threads(config.threads)
    kinds = tuple(dict.fromkeys(METHODS[m] for m in config.methods))
    table = PowerTable(meta={"config": config.to_dict(),
                             "ellipse_axes": "semi-axes", "placement": "uniform, fully inside"})
    calib = {}
    for W, H in config.domains:
        domain = build_domain(W, H)
        for shape in config.shapes:
            family = _family_for(shape, domain, config.family)
            fkey = (W, H, family.fingerprint())
            if fkey not in calib:
                t0 = time.perf_counter()
                if "fast" in kinds:
                    fast_plan(family)
                cseed = int(seed_sequence(config.seed, _key_int("calib", *fkey)).generate_state(1)[0])
                calib[fkey] = (family, calibrate_many(family, config.B, cseed, kinds, threads),
                               time.perf_counter() - t0)
                if progress:
                    progress(f"calibrated {W}x{H} {family.kind} in {calib[fkey][2]:.1f}s")
            family, nulls, _ = calib[fkey]
            size = rasterize(shape.place(W, H, rng_for(0)), domain).size
            for rho in config.rhos:
                cell = _key_int(W, H, shape.name, rho)
                t0 = time.perf_counter()

                def one(run, rho=rho, cell=cell):
                    ss = seed_sequence(config.seed, cell, run)
                    region = rasterize(shape.place(W, H, rng_for(ss, 0)), domain)
                    pair = simulate_alternative(domain, region, rho, seed_sequence(ss, 1))
                    return scan_kinds(pair, family, kinds, 1)

                obs = _map(one, range(config.runs), threads)
                wall = time.perf_counter() - t0
                for m in config.methods:
                    k = METHODS[m]
                    q = nulls[k].quantile(config.alpha)
                    power = float(np.mean([o[k] > q for o in obs]))
                    table.add(study=config.study, shape=shape.name, domain=f"{W}x{H}", size=size,
                              rho=float(rho), method=m, power=power, runs=config.runs,
                              wall_s=wall, cover_s=None)
                if progress:
                    progress(f"{W}x{H} {shape.name} rho={rho}: " + ", ".join(
                        f"{m}={table.power(shape=shape.name, domain=f'{W}x{H}', rho=float(rho), method=m):.3f}"
                        for m in config.methods) + f" ({wall:.1f}s)")
    return table


def run_timing_study(config: ExperimentConfig, progress=None, repeats: int = 1) -> PowerTable:
    """Single-instance wall time of the full and fast scans at each lattice size.

    Covering construction is data independent and timed separately
    (``cover_s``); each scan is timed ``repeats`` times and the minimum kept.
    """
    table = PowerTable(meta={"config": config.to_dict()})
    shape = config.shapes[0] if config.shapes else ShapeSpec("rect", (10, 10))
    rho = config.rhos[0] if config.rhos else 0.5
    for W, H in config.domains:
        domain = build_domain(W, H)
        family = _family_for(shape, domain, config.family)
        t0 = time.perf_counter()
        fast_plan(family)
        cover_s = time.perf_counter() - t0
        ss = seed_sequence(config.seed, _key_int("timing", W, H))
        region = rasterize(shape.place(W, H, rng_for(ss, 0)), domain)
        pair = simulate_alternative(domain, region, rho, seed_sequence(ss, 1))
        # warm the compiled kernels on a tiny instance
        small = build_domain(16, 16)
        sfam = _family_for(shape, small, config.family)
        scan_fast(simulate_null(small, 0), sfam, 1)
        scan_full(simulate_null(small, 0), sfam, 1)
        times = {}
        for m in config.methods:
            best = math.inf
            for _ in range(repeats):
                tables = build_moment_tables(pair)
                t0 = time.perf_counter()
                if METHODS[m] == "fast":
                    scan_fast(pair, family, config.threads, tables)
                else:
                    scan_full(pair, family, config.threads, tables)
                best = min(best, time.perf_counter() - t0)
            times[m] = best
            table.add(study="timing", shape=shape.name, domain=f"{W}x{H}", size=region.size, rho=float(rho),
                      method=m, power=float("nan"), runs=repeats, wall_s=best,
                      cover_s=cover_s if METHODS[m] == "fast" else None)
        if progress:
            progress(f"{W}x{H}: " + ", ".join(f"{m}={t:.2f}s" for m, t in times.items())
                     + f" cover={cover_s:.1f}s")
    return table


def speedups(table: PowerTable, slow: str = "T*", fast: str = "T~*") -> dict:
    """``wall(slow) / wall(fast)`` per lattice, in table order."""
    out = {}
    for r in table.select(method=slow):
        f = table.select(domain=r["domain"], method=fast)
        if f:
            out[r["domain"]] = r["wall_s"] / f[0]["wall_s"]
    return out


def emit_figure_data(table: PowerTable, study: str, path=None, plot_path=None) -> list:
    """Tidy ``(x, series, power)`` rows: x is rho, series the region (region-size)
    or lattice (lattice-size)."""
    study = ALIASES.get(study, study)
    rows = table.select(study=study)
    if not rows:
        raise DataError(f"table has no rows for study {study!r}")
    series_col = "domain" if study == "lattice-size" else "shape"
    out = [{"x": r["rho"], "series": f"{r[series_col]} {r['method']}", "power": r["power"]} for r in rows]
    if path is not None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=["x", "series", "power"])
            w.writeheader()
            w.writerows(out)
    if plot_path is not None:
        _plot(out, plot_path, study)
    return out


def _plot(rows, path, study):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for s in dict.fromkeys(r["series"] for r in rows):
        pts = sorted((r["x"], r["power"]) for r in rows if r["series"] == s)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=s)
    ax.set_xlabel("rho")
    ax.set_ylabel("power")
    ax.set_title(study)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Per-region correlation statistics and the full and covering-based scans."""
from __future__ import annotations

import functools
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DegenerateInputError, FamilyError
from .lattice import ChannelPair, MomentTables, build_moment_tables, region_sums
from .regions.covering import covering_set
from .regions.family import RegionFamily, bucket_of, eps_for_scale

R2_MAX = K.R2_MAX


def log_plus(x: float) -> float:
    return math.log(max(x, 1.0))


def pearson(sums) -> float:
    """Pearson correlation from raw region sums ``(Sx, Sy, Sxx, Syy, Sxy, count)``."""
    sx, sy, sxx, syy, sxy, cnt = sums
    if cnt < 2:
        raise DegenerateInputError("need at least two cells")
    vx = sxx - sx * sx / cnt
    vy = syy - sy * sy / cnt
    if vx <= K.VAR_RTOL * abs(sxx) or vy <= K.VAR_RTOL * abs(syy):
        raise DegenerateInputError("zero variance within region")
    r = (sxy - sx * sy / cnt) / math.sqrt(vx * vy)
    return min(1.0, max(-1.0, r))


def log_lr(r: float, size: int) -> float:
    """``-(size - 2) * log(1 - r^2)`` with ``r^2`` clamped below 1."""
    r2 = min(r * r, R2_MAX)
    return -(size - 2) * math.log1p(-r2)


def denominator(size: int, n: int, rule: str = "floor") -> float:
    d = log_plus(log_plus(n / size))
    if rule == "floor":
        return max(d, 1.0)
    return d


def corrected_score(L: float, size: int, n: int, rule: str = "floor") -> float:
    """Size-corrected log-LR: ``(L - 2 log(n/size)) / loglog(n/size)``."""
    den = denominator(size, n, rule)
    if den <= 0:
        raise FamilyError(f"log log(n/|R|) vanishes at |R|={size}, n={n}; lower the size cap")
    return (L - 2.0 * log_plus(n / size)) / den


@functools.lru_cache(maxsize=64)
def score_tables(n: int, cap: int, rule: str):
    """Per-size penalty, denominator and scale bucket for sizes ``0..cap``."""
    pen = np.zeros(cap + 1)
    den = np.ones(cap + 1)
    bucket = np.zeros(cap + 1, dtype=np.int64)
    for s in range(1, cap + 1):
        pen[s] = 2.0 * log_plus(n / s)
        d = denominator(s, n, rule)
        if d <= 0:
            raise FamilyError(f"log log(n/|R|) vanishes at |R|={s}, n={n}; lower the size cap")
        den[s] = d
        bucket[s] = bucket_of(s, n)
    for a in (pen, den, bucket):
        a.setflags(write=False)
    return pen, den, bucket


@dataclass
class RegionScore:
    shape: object
    size: int
    r: float
    L: float
    score: float


def score_region(tables: MomentTables, family: RegionFamily, shape) -> RegionScore:
    region = family.region(shape)
    sums = region_sums(tables, region)
    r = pearson(sums)
    L = log_lr(r, region.size)
    return RegionScore(shape, region.size, r, L,
                       corrected_score(L, region.size, family.n, family.spec.denominator))


@dataclass
class ScanReport:
    statistic: str
    value: float
    region: object
    size: int
    per_scale: list
    evaluated: int
    degenerate: int
    wall_ms: float
    lstar: float
    lstar_region: object
    covered_scales: list = field(default_factory=list)
    cover_ms: float = 0.0

    def scale_max(self, k: int, which: str = "score") -> float:
        for row in self.per_scale:
            if row["k"] == k:
                return row["max" if which == "score" else "lmax"]
        return -math.inf

    def to_dict(self) -> dict:
        def shape_dict(s, size=None):
            if s is None:
                return None
            d = {"kind": s.kind, "params": s.params()}
            if size is not None:
                d["size"] = size
            return d
        return {
            "statistic": self.statistic,
            "value": self.value,
            "region": shape_dict(self.region, self.size),
            "per_scale": [{"k": r["k"], "max": r["max"], "argmax": shape_dict(r["argmax"]),
                           "lmax": r["lmax"], "covered": r["covered"]} for r in self.per_scale],
            "evaluated": self.evaluated,
            "degenerate": self.degenerate,
            "wall_ms": self.wall_ms,
            "cover_ms": self.cover_ms,
            "lstar": self.lstar,
            "lstar_region": shape_dict(self.lstar_region),
        }


class _State:
    __slots__ = ("best", "arg", "thr", "thr_ver", "ver", "stats")

    def __init__(self, nb: int, cap: int):
        self.best = np.full((2, nb), -np.inf)
        self.arg = np.full((2, nb, 4), -1, dtype=np.int64)
        self.thr = np.zeros(cap + 1)
        self.thr_ver = np.full(cap + 1, -1, dtype=np.int64)
        self.ver = np.zeros(nb, dtype=np.int64)
        self.stats = np.zeros(2, dtype=np.int64)

    def args(self):
        return (self.best, self.arg, self.thr, self.thr_ver, self.ver, self.stats)

    def absorb(self, other: "_State"):
        """Merge a state that comes later in enumeration order."""
        better = other.best > self.best
        self.best[better] = other.best[better]
        self.arg[better] = other.arg[better]
        self.stats += other.stats


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("CORRSCAN_THREADS", 1)
    try:
        threads = int(threads)
    except ValueError as exc:
        raise ValueError(f"bad thread count {threads!r}") from exc
    return max(1, threads)


def _split(lo: int, hi: int, parts: int):
    parts = max(1, min(parts, hi - lo)) if hi > lo else 1
    edges = np.linspace(lo, hi, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_jobs(jobs, family: RegionFamily, threads: int) -> _State:
    """Run scan jobs (each ``f(state_args)``) and merge them in job order."""
    states = [_State(family.n_buckets, family.cap) for _ in jobs]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(lambda js: js[0](*js[1].args()), zip(jobs, states)))
    else:
        for job, st in zip(jobs, states):
            job(*st.args())
    acc = states[0]
    for st in states[1:]:
        acc.absorb(st)
    return acc


def _full_jobs(tables: MomentTables, family: RegionFamily, smin: int, smax: int, threads: int):
    pen, den, bucket = score_tables(family.n, family.cap, family.spec.denominator)
    full = family.domain.is_full
    amin, cap = family.a_min, family.cap
    if family.kind == "rect":
        P = tables.std
        H = family.domain.height
        lo, hi = family.side_bounds
        area_lim = min(family.area_cap, smax) if full else family.area_cap
        # later top rows hold fewer rectangles; split rows by rough work estimate
        weights = np.array([(H - y) ** 2 for y in range(H)], dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(weights)))
        parts = threads * 4 if threads > 1 else 1
        cuts = np.searchsorted(cum, np.linspace(0, cum[-1], parts + 1)).clip(0, H)
        cuts[0], cuts[-1] = 0, H
        spans = [(int(a), int(b)) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
        return [
            (lambda *st, a=a, b=b: K.rect_band_scan(P, a, b, lo, hi, lo, hi, amin, cap, area_lim,
                                                    smin, smax, full, pen, den, bucket, *st))
            for a, b in spans
        ]
    ts = family.templates
    R = tables.rows
    parts = threads * 4 if threads > 1 else 1
    return [
        (lambda *st, a=a, b=b: K.tpl_scan(R, a, b, ts.tstart, ts.tdr, ts.tc0, ts.tc1, ts.th, ts.tw,
                                          ts.tsize, amin, cap, smin, smax, full, pen, den, bucket, *st))
        for a, b in _split(0, len(ts), parts)
    ]


def _list_jobs(tables: MomentTables, family: RegionFamily, key_arrays, threads: int):
    pen, den, bucket = score_tables(family.n, family.cap, family.spec.denominator)
    amin, cap = family.a_min, family.cap
    parts = threads * 4 if threads > 1 else 1
    jobs = []
    for keys in key_arrays:
        if family.kind == "rect":
            P = tables.std
            jobs += [
                (lambda *st, keys=keys, a=a, b=b: K.rect_list_scan(P, keys, a, b, amin, cap, pen, den, bucket, *st))
                for a, b in _split(0, len(keys), parts)
            ]
        else:
            ts = family.templates
            R = tables.rows
            jobs += [
                (lambda *st, keys=keys, a=a, b=b: K.tpl_list_scan(R, keys, a, b, ts.tstart, ts.tdr, ts.tc0,
                                                                  ts.tc1, amin, cap, pen, den, bucket, *st))
                for a, b in _split(0, len(keys), parts)
            ]
    return jobs


def _report(statistic, st: _State, family: RegionFamily, wall_ms, covered=(), cover_ms=0.0):
    if st.stats[0] == 0:
        raise FamilyError("no scorable region: family empty after size filters or all regions degenerate")

    def shape(code):
        return None if code[0] < 0 else family.decode(code)

    per_scale = []
    for k in range(2, family.n_buckets):
        if np.isfinite(st.best[0, k]):
            per_scale.append({"k": k, "max": float(st.best[0, k]), "argmax": shape(st.arg[0, k]),
                              "lmax": float(st.best[1, k]), "covered": k in covered})
    top = shape(st.arg[0, 0])
    return ScanReport(
        statistic=statistic, value=float(st.best[0, 0]), region=top,
        size=family.region(top).size, per_scale=per_scale,
        evaluated=int(st.stats[0]), degenerate=int(st.stats[1]), wall_ms=wall_ms,
        lstar=float(st.best[1, 0]), lstar_region=shape(st.arg[1, 0]),
        covered_scales=sorted(covered), cover_ms=cover_ms,
    )


def _check(pair: ChannelPair, family: RegionFamily):
    if pair.domain != family.domain:
        raise FamilyError("channel domain does not match the family's domain")


def scan_full(pair: ChannelPair, family: RegionFamily, threads=None, tables=None) -> ScanReport:
    """Maximum size-corrected score over every family member."""
    _check(pair, family)
    threads = resolve_threads(threads)
    t0 = time.perf_counter()
    tables = tables if tables is not None else build_moment_tables(pair)
    st = _run_jobs(_full_jobs(tables, family, family.a_min, family.cap, threads), family, threads)
    return _report("full", st, family, (time.perf_counter() - t0) * 1e3)


def fast_plan(family: RegionFamily):
    """Covering sets for the scales at or below the cutoff, and the full-scan size bound.

    Returns ``(key_arrays, covered_scales, smax, build_ms)`` with one sorted
    key array per covered scale; sizes up to ``smax`` are scanned exhaustively.
    """
    cached = getattr(family, "_fast_plan", None)
    if cached is not None:
        return cached
    t0 = time.perf_counter()
    ks = family.kstar
    covered, parts = [], []
    for k in family.scales():
        if k > ks:
            break
        lo, hi = family.bucket_range(k)
        if hi <= lo or lo >= family.cap:
            continue
        cov = covering_set(family, k, eps_for_scale(family.spec.eps_policy, k))
        if len(cov):
            parts.append(cov.keys)
        covered.append(k)
    smax = min(family.cap, family.n // (1 << max(ks, 0)))
    plan = (tuple(parts), tuple(covered), smax, (time.perf_counter() - t0) * 1e3)
    family._fast_plan = plan
    return plan


def scan_fast(pair: ChannelPair, family: RegionFamily, threads=None, tables=None) -> ScanReport:
    """Scan with coverings replacing the scales at or below the cutoff.

    Covering construction depends only on the family and is cached on it; its
    one-off cost is reported as ``cover_ms`` and not included in ``wall_ms``.
    """
    _check(pair, family)
    threads = resolve_threads(threads)
    key_arrays, covered, smax, build_ms = fast_plan(family)
    t0 = time.perf_counter()
    tables = tables if tables is not None else build_moment_tables(pair)
    jobs = _list_jobs(tables, family, key_arrays, threads)
    if smax >= family.a_min:
        jobs += _full_jobs(tables, family, family.a_min, smax, threads)
    st = _run_jobs(jobs, family, threads)
    return _report("fast", st, family, (time.perf_counter() - t0) * 1e3, covered, build_ms)


def scan(pair, family, kind: str = "full", threads=None, tables=None) -> ScanReport:
    if kind == "full":
        return scan_full(pair, family, threads, tables)
    if kind == "fast":
        return scan_fast(pair, family, threads, tables)
    raise ValueError(f"unknown scan kind {kind!r}")


def statistic_value(report: ScanReport, kind: str) -> float:
    """Value of statistic ``kind`` ('full', 'fast' or 'lstar') carried by ``report``."""
    if kind == "lstar":
        return report.lstar
    return report.value

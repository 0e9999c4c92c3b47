"""Slow reference implementations used to check the fast paths.

Nothing here touches prefix tables or compiled kernels: region values are
gathered cell by cell and moments use two-pass, compensated summation.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInputError, FamilyError
from .lattice import ChannelPair
from .regions.family import RegionFamily, bucket_of
from .regions.shapes import RasterRegion
from .scanstat import ScanReport, corrected_score, log_lr

DEFAULT_GUARD = 1_000_000


def _values(pair: ChannelPair, region: RasterRegion):
    xs, ys = [], []
    for r, c0, c1 in region.intervals:
        xs.append(pair.x[r, c0:c1 + 1])
        ys.append(pair.y[r, c0:c1 + 1])
    return np.concatenate(xs), np.concatenate(ys)


def pearson_values(x, y) -> float:
    """Two-pass Pearson correlation of two equal-length samples."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = len(x)
    if m < 2:
        raise DegenerateInputError("need at least two cells")
    mx = math.fsum(x) / m
    my = math.fsum(y) / m
    dx = x - mx
    dy = y - my
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    if sxx <= 0.0 or syy <= 0.0:
        raise DegenerateInputError("zero variance within region")
    # relative floor matching the fast path's degeneracy rule
    if sxx <= 1e-12 * math.fsum(x * x) or syy <= 1e-12 * math.fsum(y * y):
        raise DegenerateInputError("zero variance within region")
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def oracle_pearson(pair: ChannelPair, region: RasterRegion) -> float:
    x, y = _values(pair, region)
    return pearson_values(x, y)


def oracle_scan(pair: ChannelPair, family: RegionFamily, guard: int = DEFAULT_GUARD) -> ScanReport:
    """Exhaustive maximum of the corrected score, one region at a time."""
    if pair.domain != family.domain:
        raise FamilyError("channel domain does not match the family's domain")
    t0 = time.perf_counter()
    n = family.n
    rule = family.spec.denominator
    best = {}
    top = (-math.inf, None, 0)
    ltop = (-math.inf, None)
    evaluated = degenerate = 0
    for code, size in family.iter_codes():
        if evaluated + degenerate >= guard:
            raise FamilyError(f"family exceeds the oracle guard of {guard} regions")
        shape = family.decode(code)
        region = family.region(shape)
        try:
            r = oracle_pearson(pair, region)
        except DegenerateInputError:
            degenerate += 1
            continue
        evaluated += 1
        L = log_lr(r, size)
        T = corrected_score(L, size, n, rule)
        k = bucket_of(size, n)
        cur = best.get(k)
        if cur is None:
            best[k] = [T, shape, L]
        else:
            if T > cur[0]:
                cur[0], cur[1] = T, shape
            if L > cur[2]:
                cur[2] = L
        if T > top[0]:
            top = (T, shape, size)
        if L > ltop[0]:
            ltop = (L, shape)
    if evaluated == 0:
        raise FamilyError("no scorable region")
    per_scale = [{"k": k, "max": v[0], "argmax": v[1], "lmax": v[2], "covered": False}
                 for k, v in sorted(best.items())]
    return ScanReport("oracle", top[0], top[1], top[2], per_scale, evaluated, degenerate,
                      (time.perf_counter() - t0) * 1e3, ltop[0], ltop[1])


def t_statistic(r: float, size: int) -> float:
    return math.sqrt(size - 2) * r / math.sqrt(1.0 - r * r)


def null_statistic_sample(region_size: int, draws: int, seed: int) -> list[float]:
    """Per-region t statistics of ``draws`` independent null regions."""
    if draws <= 0:
        return []
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(draws):
        x = rng.standard_normal(region_size)
        y = rng.standard_normal(region_size)
        out.append(t_statistic(pearson_values(x, y), region_size))
    return out


def residual_sum_of_squares(x, y) -> float:
    """RSS of the least-squares fit ``y ~ 1 + x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return math.fsum(res * res)


@dataclass
class CoverCheck:
    members: int
    cover_size: int
    uncovered: int
    worst: float


def _incidence(regions, n_cells: int, width: int):
    rows, cols = [], []
    for i, reg in enumerate(regions):
        for r, c0, c1 in reg.intervals:
            cells = np.arange(c0, c1 + 1) + r * width
            cols.append(cells)
            rows.append(np.full(len(cells), i))
    if not cols:
        return sp.csr_matrix((len(regions), n_cells))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(regions), n_cells))


def verify_covering(family: RegionFamily, cover, eps: float | None = None, chunk: int = 500) -> CoverCheck:
    """Check every bucket member against every covering member by cell sets."""
    eps = cover.eps if eps is None else eps
    H, W = family.domain.shape
    lo, hi = family.bucket_range(cover.k)
    members = [c for c, _ in family.iter_codes(lo, hi)]
    n_members = len(members)
    cset = {tuple(int(v) for v in c) for c in cover.codes}
    # members that are themselves covering members are at distance 0; covering
    # members may come from a neighbouring bucket, so sizes are checked instead
    rest = [family.region(family.decode(c)) for c in members if c not in cset]
    if not rest:
        return CoverCheck(n_members, len(cset), 0, 0.0)
    creg = cover.regions()
    for r in creg:
        if not family.a_min <= r.size <= family.cap:
            raise AssertionError("covering member outside the family's size range")
    C = _incidence(creg, H * W, W).T.tocsc()
    csize = np.array([r.size for r in creg], dtype=float)
    uncovered = 0
    worst = 0.0
    for a in range(0, len(rest), chunk):
        mreg = rest[a:a + chunk]
        M = _incidence(mreg, H * W, W)
        msize = np.array([r.size for r in mreg], dtype=float)
        inter = (M @ C).tocoo()
        sim = np.zeros(len(mreg))
        if inter.nnz:
            vals = inter.data / np.sqrt(msize[inter.row] * csize[inter.col])
            np.maximum.at(sim, inter.row, vals)
        d = 1.0 - sim
        uncovered += int(np.sum(d > eps + 1e-12))
        worst = max(worst, float(d.max()) if len(d) else 0.0)
    return CoverCheck(n_members, len(creg), uncovered, worst)

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from corrscan.errors import DegenerateInputError, FamilyError
from corrscan.lattice import ChannelPair, build_domain, build_moment_tables, region_sums
from corrscan.oracle import oracle_scan
from corrscan.regions import FamilySpec, Rectangle, RegionFamily, RasterRegion
from corrscan.scanstat import (corrected_score, denominator, log_lr, pearson, scan, scan_fast, scan_full,
                               score_region)


def _pair(rng, H, W, rho=0.0):
    d = build_domain(W, H)
    x = rng.normal(size=(H, W))
    y = rho * x + math.sqrt(1 - rho * rho) * rng.normal(size=(H, W))
    return ChannelPair(d, x, y)


def _sums(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return (x.sum(), y.sum(), (x * x).sum(), (y * y).sum(), (x * y).sum(), len(x))


def test_pearson_examples():
    x = [1, 2, 3, 4]
    assert pearson(_sums(x, x)) == pytest.approx(1.0)
    assert pearson(_sums(x, [-v for v in x])) == pytest.approx(-1.0)
    # exact rational evaluation of the same formula
    X, Y = [Fraction(v) for v in x], [Fraction(v) for v in (1, 2, 2, 4)]
    mx, my = sum(X) / 4, sum(Y) / 4
    cxy = sum((a - mx) * (b - my) for a, b in zip(X, Y))
    vxx = sum((a - mx) ** 2 for a in X)
    vyy = sum((b - my) ** 2 for b in Y)
    exact = float(cxy) / math.sqrt(float(vxx * vyy))
    assert pearson(_sums(x, (1, 2, 2, 4))) == pytest.approx(exact, abs=1e-12)
    assert round(exact, 4) == 0.9234


def test_pearson_degenerate():
    with pytest.raises(DegenerateInputError):
        pearson(_sums([1, 1, 1], [1, 2, 3]))
    with pytest.raises(DegenerateInputError):
        pearson(_sums([1], [1]))


def test_log_lr_examples():
    assert log_lr(0.0, 50) == 0
    assert log_lr(0.5, 102) == pytest.approx(-100 * math.log(0.75), abs=1e-12)
    assert round(log_lr(0.5, 102), 4) == 28.7682
    assert log_lr(1.0, 10) == pytest.approx(-8 * math.log(1e-12), rel=1e-3)
    assert math.isfinite(log_lr(-1.0, 10))


def test_corrected_score_examples():
    assert corrected_score(2 * math.log(1024 / 64), 64, 1024) == pytest.approx(0, abs=1e-12)
    want = (10 - 2 * math.log(16)) / math.log(math.log(16))
    assert corrected_score(10, 64, 1024) == pytest.approx(want, abs=1e-12)
    # direct evaluation gives 4.36845; 4.3686 results from rounding the intermediates first
    assert want == pytest.approx(4.3686, abs=2e-4)
    assert denominator(256, 1024) == 1.0
    assert corrected_score(7.0, 256, 1024) == pytest.approx(7.0 - 2 * math.log(4))
    assert denominator(256, 1024, "logplus") == pytest.approx(math.log(math.log(4)))


@given(size=st.integers(8, 4000), r1=st.floats(0, 0.999), r2=st.floats(0, 0.999))
def test_score_monotone_in_abs_r(size, r1, r2):
    n = 16384
    if size > n // 4 or abs(r1 - r2) < 1e-6:
        return
    lo, hi = sorted((r1, r2))
    assert corrected_score(log_lr(hi, size), size, n) > corrected_score(log_lr(lo, size), size, n)
    assert log_lr(-hi, size) == log_lr(hi, size)


def test_single_region_family(rng):
    pair = _pair(rng, 4, 4, 0.3)
    fam = RegionFamily(FamilySpec(min_side=4, size_cap_fraction=1.0), pair.domain)
    rep = scan_full(pair, fam)
    sc = score_region(build_moment_tables(pair), fam, Rectangle(0, 0, 4, 4))
    assert rep.evaluated == 1 and rep.region == Rectangle(0, 0, 4, 4)
    assert rep.value == pytest.approx(sc.score, rel=1e-12)
    orc = oracle_scan(pair, fam)
    assert orc.value == pytest.approx(sc.score, rel=1e-12)


def test_perfect_correlation_dominates(rng):
    d = build_domain(8, 8)
    x = rng.normal(size=(8, 8))
    pair = ChannelPair(d, x, x.copy())
    fam = RegionFamily(FamilySpec(), d)
    rep = scan_full(pair, fam)
    tables = build_moment_tables(pair)
    top = score_region(tables, fam, rep.region)
    assert top.r == pytest.approx(1.0)
    assert rep.value == pytest.approx(oracle_scan(pair, fam).value, rel=1e-9)


@pytest.mark.parametrize("kind", ["rect", "ellipse", "polygon"])
def test_matches_oracle(kind, rng):
    N = 8 if kind == "rect" else 12
    pair = _pair(rng, N, N, 0.2)
    fam = RegionFamily(FamilySpec(kind=kind), pair.domain)
    a, b = scan_full(pair, fam), oracle_scan(pair, fam)
    assert a.value == pytest.approx(b.value, rel=1e-8)
    assert a.region == b.region
    assert a.lstar == pytest.approx(b.lstar, rel=1e-8)
    assert a.evaluated == b.evaluated
    for ra, rb in zip(a.per_scale, b.per_scale):
        assert ra["k"] == rb["k"] and ra["max"] == pytest.approx(rb["max"], rel=1e-8)


def test_report_invariants(rng):
    pair = _pair(rng, 16, 16)
    fam = RegionFamily(FamilySpec(), pair.domain)
    for rep in (scan_full(pair, fam), scan_fast(pair, fam)):
        assert rep.value == max(r["max"] for r in rep.per_scale)
        assert rep.lstar == max(r["lmax"] for r in rep.per_scale)
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["region"]["kind"] == "rect" and d["region"]["size"] == rep.size
        assert {"statistic", "value", "per_scale", "evaluated", "wall_ms"} <= set(d)


def test_fast_equals_full_when_covers_are_whole_buckets(rng):
    pair = _pair(rng, 16, 16, 0.3)
    fam = RegionFamily(FamilySpec(eps_policy="fixed:0.0"), pair.domain)
    a, b = scan_full(pair, fam), scan_fast(pair, fam)
    assert a.value == b.value and a.region == b.region


@given(seed=st.integers(0, 2**32 - 1))
def test_fast_never_exceeds_full(seed):
    rng = np.random.default_rng(seed)
    pair = _pair(rng, 20, 20, rng.uniform(0, 0.6))
    fam = _coarse_family(pair.domain)
    assert scan_fast(pair, fam).value <= scan_full(pair, fam).value


_FAMS = {}


def _coarse_family(domain):
    # big covering radius so the fast scan really skips regions
    if domain.shape not in _FAMS:
        _FAMS[domain.shape] = RegionFamily(FamilySpec(eps_policy="fixed:0.9"), domain)
    return _FAMS[domain.shape]


def test_fast_scan_skips_regions(rng):
    pair = _pair(rng, 20, 20)
    fam = _coarse_family(pair.domain)
    assert scan_fast(pair, fam).evaluated < scan_full(pair, fam).evaluated


@given(seed=st.integers(0, 2**32 - 1), a=st.floats(0.01, 100), b=st.floats(-1e3, 1e3),
       c=st.floats(0.01, 100), d=st.floats(-1e3, 1e3))
def test_affine_invariance(seed, a, b, c, d):
    rng = np.random.default_rng(seed)
    pair = _pair(rng, 12, 12, 0.3)
    fam = _coarse_family(pair.domain)
    other = ChannelPair(pair.domain, a * pair.x + b, c * pair.y + d)
    for f in (scan_full, scan_fast):
        r1, r2 = f(pair, fam), f(other, fam)
        assert r1.region == r2.region
        assert r1.value == pytest.approx(r2.value, rel=1e-9)


@pytest.mark.parametrize("kind", ["rect", "ellipse"])
def test_thread_count_does_not_change_result(kind, rng):
    pair = _pair(rng, 24, 24, 0.1)
    fam = RegionFamily(FamilySpec(kind=kind), pair.domain)
    for f in (scan_full, scan_fast):
        a, b = f(pair, fam, threads=1), f(pair, fam, threads=3)
        assert a.value == b.value and a.region == b.region and a.lstar == b.lstar
        assert [r["max"] for r in a.per_scale] == [r["max"] for r in b.per_scale]
        assert [r["argmax"] for r in a.per_scale] == [r["argmax"] for r in b.per_scale]


def test_degenerate_regions_counted(rng):
    d = build_domain(10, 10)
    x = rng.normal(size=(10, 10))
    x[:4, :4] = 5.0
    pair = ChannelPair(d, x, rng.normal(size=(10, 10)))
    fam = RegionFamily(FamilySpec(), d)
    rep = scan_full(pair, fam)
    orc = oracle_scan(pair, fam)
    assert rep.degenerate == orc.degenerate > 0
    assert rep.evaluated == orc.evaluated


def test_domain_mismatch(rng):
    pair = _pair(rng, 8, 8)
    fam = RegionFamily(FamilySpec(), build_domain(9, 8))
    with pytest.raises(FamilyError):
        scan_full(pair, fam)
    with pytest.raises(ValueError):
        scan(pair, RegionFamily(FamilySpec(), pair.domain), "medium")


def test_masked_scan_matches_oracle(rng):
    m = rng.random((9, 9)) > 0.15
    d = build_domain(9, 9, m)
    pair = ChannelPair(d, rng.normal(size=(9, 9)), rng.normal(size=(9, 9)))
    fam = RegionFamily(FamilySpec(), d)
    a, b = scan_full(pair, fam), oracle_scan(pair, fam)
    assert a.value == pytest.approx(b.value, rel=1e-8) and a.region == b.region


def test_large_offset_intensities(rng):
    # 16-bit style intensities with a big common offset
    pair = _pair(rng, 10, 10, 0.4)
    shifted = ChannelPair(pair.domain, 3e4 + 50 * pair.x, 4e4 + 20 * pair.y)
    fam = RegionFamily(FamilySpec(), pair.domain)
    assert scan_full(shifted, fam).value == pytest.approx(oracle_scan(shifted, fam).value, rel=1e-8)


def test_region_sums_pearson_agree(rng):
    pair = _pair(rng, 10, 10, 0.5)
    t = build_moment_tables(pair)
    reg = RasterRegion.from_intervals([(1, 2, 6), (2, 1, 7), (3, 3, 4)])
    from corrscan.oracle import oracle_pearson
    assert pearson(region_sums(t, reg)) == pytest.approx(oracle_pearson(pair, reg), rel=1e-10)

import math

import numpy as np
import pytest
from scipy import stats

from corrscan.errors import DegenerateInputError, FamilyError
from corrscan.lattice import ChannelPair, build_domain
from corrscan.oracle import (null_statistic_sample, oracle_pearson, oracle_scan, pearson_values,
                             residual_sum_of_squares, t_statistic)
from corrscan.regions import FamilySpec, RasterRegion, RegionFamily


def test_pearson_identity_cases(rng):
    d = build_domain(5, 5)
    x = rng.normal(size=(5, 5))
    pair = ChannelPair(d, x, x)
    reg = RasterRegion.from_intervals([(0, 0, 4), (1, 1, 3)])
    assert oracle_pearson(pair, reg) == pytest.approx(1.0)
    assert pearson_values([0, 1, 2], [0, 1, 2]) == pytest.approx(1.0)
    with pytest.raises(DegenerateInputError):
        pearson_values([3, 3, 3], [0, 1, 2])


def test_pearson_matches_numpy(rng):
    for _ in range(200):
        m = int(rng.integers(3, 60))
        x, y = rng.normal(size=m), rng.normal(size=m) + 0.3 * rng.normal(size=m)
        assert pearson_values(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], rel=1e-10)


def test_guard(rng):
    d = build_domain(10, 10)
    pair = ChannelPair(d, rng.normal(size=(10, 10)), rng.normal(size=(10, 10)))
    with pytest.raises(FamilyError):
        oracle_scan(pair, RegionFamily(FamilySpec(), d), guard=50)


def test_null_sample_edge_and_law():
    assert null_statistic_sample(100, 0, 1) == []
    s = null_statistic_sample(100, 2000, 7)
    assert len(s) == 2000
    assert stats.kstest(s, stats.t(98).cdf).statistic < 1.95 / math.sqrt(2000)
    assert null_statistic_sample(30, 5, 3) == null_statistic_sample(30, 5, 3)


def test_t_statistic():
    assert t_statistic(0.0, 50) == 0
    assert t_statistic(0.6, 27) == pytest.approx(5 * 0.6 / 0.8)


def test_residual_identity(rng):
    for _ in range(100):
        m = int(rng.integers(8, 200))
        x = rng.normal(size=m) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
        y = 0.4 * x + rng.normal(size=m)
        r = pearson_values(x, y)
        syy = math.fsum((y - y.mean()) ** 2)
        assert residual_sum_of_squares(x, y) == pytest.approx(syy * (1 - r * r), rel=1e-9)

"""Monte Carlo calibration of the scan statistics and synthetic data."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, FingerprintMismatch
from .lattice import ChannelPair, LatticeDomain
from .regions.family import RegionFamily
from .regions.shapes import RasterRegion
from .scanstat import ScanReport, resolve_threads, scan_fast, scan_full

KINDS = ("full", "fast", "lstar")
MIN_B = 100


def seed_sequence(seed, *keys) -> np.random.SeedSequence:
    """Child stream ``keys`` of master ``seed`` (stateless, order independent)."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(keys))
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def rng_for(seed, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def simulate_null(domain: LatticeDomain, seed) -> ChannelPair:
    """Independent N(0, 1) channels (the whole raster is drawn, X then Y)."""
    rng = rng_for(seed)
    shape = domain.shape
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    return ChannelPair(domain, x, y)


def simulate_alternative(domain: LatticeDomain, region: RasterRegion, rho: float, seed) -> ChannelPair:
    """Null channels except ``Y = rho X + sqrt(1 - rho^2) Z`` inside ``region``.

    Uses the same draws as :func:`simulate_null`, so ``rho = 0`` reproduces
    the null pair exactly.
    """
    if not abs(rho) < 1:
        raise DataError(f"correlation must satisfy |rho| < 1, got {rho}")
    H, W = domain.shape
    for r, c0, c1 in region.intervals:
        if r < 0 or r >= H or c0 < 0 or c1 >= W:
            raise DataError("region does not fit the domain")
    rng = rng_for(seed)
    x = rng.standard_normal((H, W))
    y = rng.standard_normal((H, W))
    m = region.to_mask((H, W))
    y[m] = rho * x[m] + math.sqrt(1.0 - rho * rho) * y[m]
    return ChannelPair(domain, x, y)


def statistic(report: ScanReport, kind: str) -> float:
    return report.lstar if kind == "lstar" else report.value


def scan_kinds(pair: ChannelPair, family: RegionFamily, kinds, threads=1) -> dict:
    """Values of each requested statistic; T* and L* share one full scan."""
    out = {}
    if "full" in kinds or "lstar" in kinds:
        rep = scan_full(pair, family, threads)
        if "full" in kinds:
            out["full"] = rep.value
        if "lstar" in kinds:
            out["lstar"] = rep.lstar
    if "fast" in kinds:
        out["fast"] = scan_fast(pair, family, threads).value
    return out


@dataclass
class NullDistribution:
    kind: str
    B: int
    seed: int
    fingerprint: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.sort(np.asarray(self.values, dtype=float))
        if len(self.values) != self.B:
            raise DataError(f"expected {self.B} null values, got {len(self.values)}")

    def quantile(self, alpha: float) -> float:
        """The ``ceil((1 - alpha) B)``-th smallest null value."""
        if not 0 < alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        idx = math.ceil((1.0 - alpha) * self.B - 1e-9)
        return float(self.values[min(max(idx, 1), self.B) - 1])

    def p_value(self, observed: float) -> float:
        return p_value(self, observed)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "B": self.B, "seed": self.seed,
                "fingerprint": self.fingerprint, "values": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, d: dict) -> "NullDistribution":
        try:
            return cls(d["kind"], int(d["B"]), int(d["seed"]), d["fingerprint"], d["values"])
        except KeyError as exc:
            raise DataError(f"calibration file lacks field {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path, fingerprint: str | None = None) -> "NullDistribution":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read calibration {path}: {exc}") from exc
        nd = cls.from_dict(d)
        if fingerprint is not None and nd.fingerprint != fingerprint:
            raise FingerprintMismatch(
                f"calibration was built for family/domain {nd.fingerprint}, not {fingerprint}")
        return nd


def p_value(nulldist: NullDistribution, observed: float) -> float:
    """``(1 + #{null >= observed}) / (B + 1)``."""
    if nulldist.B == 0:
        raise DataError("empty null distribution")
    ge = nulldist.B - int(np.searchsorted(nulldist.values, observed, side="left"))
    return (1 + ge) / (nulldist.B + 1)


def null_statistics(family: RegionFamily, B: int, seed: int, kinds=("full",), threads=None) -> dict:
    """``B`` null replicates of each statistic in ``kinds``; replicate ``b`` uses child stream ``b``."""
    for k in kinds:
        if k not in KINDS:
            raise ValueError(f"unknown statistic {k!r}")
    threads = resolve_threads(threads)

    def one(b):
        return scan_kinds(simulate_null(family.domain, seed_sequence(seed, b)), family, kinds, 1)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, range(B)))
    else:
        rows = [one(b) for b in range(B)]
    return {k: np.array([r[k] for r in rows]) for k in kinds}


def calibrate_many(family: RegionFamily, B: int, seed: int, kinds=("full",), threads=None) -> dict:
    if B < MIN_B:
        raise ValueError(f"need B >= {MIN_B} null replicates, got {B}")
    vals = null_statistics(family, B, seed, kinds, threads)
    fp = family.fingerprint()
    return {k: NullDistribution(k, B, int(seed), fp, v) for k, v in vals.items()}


def calibrate(family: RegionFamily, domain: LatticeDomain | None = None, B: int = 1000, seed: int = 0,
              kind: str = "full", threads=None) -> NullDistribution:
    """Null distribution of statistic ``kind`` from ``B`` Monte Carlo replicates."""
    if domain is not None and domain != family.domain:
        raise DataError("domain does not match the family's domain")
    return calibrate_many(family, B, seed, (kind,), threads)[kind]


@dataclass
class TestOutcome:
    __test__ = False  # not a pytest class

    statistic: str
    observed: float
    q_alpha: float
    alpha: float
    p_value: float
    reject: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def decide(nulldist: NullDistribution, observed: float, alpha: float) -> TestOutcome:
    q = nulldist.quantile(alpha)
    return TestOutcome(nulldist.kind, float(observed), q, alpha, p_value(nulldist, observed), observed > q)


def run_test(pair: ChannelPair, family: RegionFamily, nulldist: NullDistribution, alpha: float = 0.05,
             threads=None):
    """Scan ``pair`` with the statistic ``nulldist`` was built for; returns (outcome, report)."""
    if nulldist.fingerprint != family.fingerprint():
        raise FingerprintMismatch(
            f"calibration was built for family/domain {nulldist.fingerprint}, not {family.fingerprint()}")
    if nulldist.kind == "fast":
        rep = scan_fast(pair, family, threads)
    else:
        rep = scan_full(pair, family, threads)
    return decide(nulldist, statistic(rep, nulldist.kind), alpha), rep

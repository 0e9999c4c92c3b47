"""Lattice domains, aligned channel rasters and moment prefix tables.

Arrays are indexed ``[row, col]``; a cell at row ``i`` and column ``j`` has
its center at the point ``(x=j, y=i)``.  Prefix tables carry a leading row
and column of zeros so that the sum over rows ``y0:y1`` and columns
``x0:x1`` is ``P[y1, x1] - P[y0, x1] - P[y1, x0] + P[y0, x0]``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateInputError, DomainError, RegionError

# channel order inside every moment table
SX, SY, SXX, SYY, SXY, CNT = range(6)
OTSU_BINS = 256


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    width: int
    height: int
    mask: np.ndarray = field(repr=False)
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def is_full(self) -> bool:
        return self.n == self.width * self.height

    def mask_digest(self) -> str:
        """Stable hash of the active-cell pattern."""
        h = hashlib.sha256()
        h.update(f"{self.height}x{self.width}:".encode())
        h.update(np.packbits(self.mask, axis=None).tobytes())
        return h.hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, LatticeDomain):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash((self.shape, self.mask_digest()))


def build_domain(width: int, height: int, mask=None) -> LatticeDomain:
    """Create a ``height x width`` lattice, optionally restricted to ``mask``."""
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise DomainError(f"lattice dimensions must be >= 1, got {width}x{height}")
    if mask is None:
        m = np.ones((height, width), dtype=bool)
    else:
        m = np.asarray(mask).astype(bool)
        if m.shape != (height, width):
            raise DomainError(f"mask shape {m.shape} does not match {(height, width)}")
        m = m.copy()
    n = int(m.sum())
    if n == 0:
        raise DomainError("mask has no active cells")
    m.setflags(write=False)
    return LatticeDomain(width=width, height=height, mask=m, n=n)


@dataclass(frozen=True, eq=False)
class ChannelPair:
    domain: LatticeDomain
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("x", "y"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != self.domain.shape:
                raise DataError(f"channel {name} has shape {a.shape}, domain is {self.domain.shape}")
            if not np.all(np.isfinite(a[self.domain.mask])):
                raise DataError(f"channel {name} has non-finite values on active cells")
            a = a.copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)


@dataclass(frozen=True, eq=False)
class MomentTables:
    """Prefix sums of (x, y, x^2, y^2, xy, 1) over active cells.

    ``raw`` holds the tables of the data as given and backs
    :func:`region_sums`.  ``std`` and ``rows`` are built from the channels
    standardized by their global active-cell mean and standard deviation;
    the scanning kernels read those, which keeps centered second moments
    well conditioned for intensities with large offsets.
    """

    domain: LatticeDomain
    raw: np.ndarray = field(repr=False)   # (H+1, W+1, 6)
    std: np.ndarray = field(repr=False)   # (H+1, W+1, 6)
    rows: np.ndarray = field(repr=False)  # (H, W+1, 6) per-row prefix of std

    def rect_query(self, x0: int, y0: int, x1: int, y1: int, table: str = "raw") -> np.ndarray:
        """Sums over rows ``y0:y1`` and columns ``x0:x1`` (half-open)."""
        P = getattr(self, table)
        return P[y1, x1] - P[y0, x1] - P[y1, x0] + P[y0, x0]


def _prefix2d(stack: np.ndarray) -> np.ndarray:
    h, w, c = stack.shape
    out = np.zeros((h + 1, w + 1, c), dtype=np.float64)
    # extended precision for the running sums, stored back as float64
    acc = np.cumsum(np.cumsum(stack.astype(np.longdouble), axis=0), axis=1)
    out[1:, 1:, :] = acc
    return out


def _moment_stack(x, y, mask):
    m = mask.astype(np.float64)
    x = np.where(mask, x, 0.0)
    y = np.where(mask, y, 0.0)
    return np.stack([x, y, x * x, y * y, x * y, m], axis=-1)


def standardize(pair: ChannelPair) -> tuple[np.ndarray, np.ndarray]:
    """Channels shifted and scaled by their active-cell mean and std."""
    mask = pair.domain.mask
    out = []
    for a in (pair.x, pair.y):
        vals = a[mask]
        mu = float(np.mean(vals))
        sd = float(np.std(vals))
        if not np.isfinite(sd) or sd == 0.0:
            sd = 1.0
        out.append(np.where(mask, (a - mu) / sd, 0.0))
    return out[0], out[1]


def build_moment_tables(pair: ChannelPair) -> MomentTables:
    mask = pair.domain.mask
    if not (np.all(np.isfinite(pair.x[mask])) and np.all(np.isfinite(pair.y[mask]))):
        raise DataError("non-finite channel values")
    raw = _prefix2d(_moment_stack(pair.x, pair.y, mask))
    xs, ys = standardize(pair)
    stack = _moment_stack(xs, ys, mask)
    std = _prefix2d(stack)
    rows = np.zeros((pair.domain.height, pair.domain.width + 1, 6))
    rows[:, 1:, :] = np.cumsum(stack.astype(np.longdouble), axis=1)
    for a in (raw, std, rows):
        a.setflags(write=False)
    return MomentTables(domain=pair.domain, raw=raw, std=std, rows=rows)


def region_sums(tables: MomentTables, region) -> tuple[float, float, float, float, float, int]:
    """(Sx, Sy, Sxx, Syy, Sxy, count) over the active cells of ``region``.

    Each row interval costs two lookups per table in the row-difference of the
    raw 2-D prefix table.
    """
    dom = tables.domain
    P = tables.raw
    acc = np.zeros(6, dtype=np.longdouble)
    for row, c0, c1 in region.intervals:
        if row < 0 or row >= dom.height or c0 < 0 or c1 >= dom.width or c1 < c0:
            raise RegionError(f"interval ({row}, {c0}, {c1}) outside {dom.height}x{dom.width} domain")
        band = P[row + 1] - P[row]
        acc += band[c1 + 1] - band[c0]
    s = acc.astype(np.float64)
    return (float(s[SX]), float(s[SY]), float(s[SXX]), float(s[SYY]), float(s[SXY]),
            int(round(s[CNT])))


def _otsu_bins(channel: np.ndarray):
    c = np.asarray(channel, dtype=np.float64)
    if not np.all(np.isfinite(c)):
        raise DataError("channel has non-finite values")
    lo, hi = float(c.min()), float(c.max())
    if not hi > lo:
        raise DegenerateInputError("constant channel: no Otsu threshold exists")
    idx = np.floor((c - lo) / (hi - lo) * OTSU_BINS).astype(np.int64)
    np.clip(idx, 0, OTSU_BINS - 1, out=idx)
    return idx, lo, hi


def otsu_threshold(channel: np.ndarray) -> tuple[int, float]:
    """Best split bin ``t`` (foreground is bins >= t) and its lower edge value."""
    idx, lo, hi = _otsu_bins(channel)
    hist = np.bincount(idx.ravel(), minlength=OTSU_BINS).astype(np.float64)
    centers = lo + (np.arange(OTSU_BINS) + 0.5) * (hi - lo) / OTSU_BINS
    w0 = np.cumsum(hist)[:-1]
    m0 = np.cumsum(hist * centers)[:-1]
    total, mtot = hist.sum(), float(np.sum(hist * centers))
    w1 = total - w0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (m0 / w0 - (mtot - m0) / w1) ** 2
    between = np.where((w0 > 0) & (w1 > 0), between, -np.inf)
    t = int(np.argmax(between)) + 1
    return t, lo + t * (hi - lo) / OTSU_BINS


def otsu_mask(channel: np.ndarray) -> np.ndarray:
    """Foreground mask of ``channel`` by Otsu's method on 256 bins over its range."""
    idx, _, _ = _otsu_bins(channel)
    t, _ = otsu_threshold(channel)
    return idx >= t

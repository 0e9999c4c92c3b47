"""Covering sets of scale buckets by digitalization.

Each bucket member is mapped to a snapped copy whose defining coordinates
(rectangle corners, polygon vertices, ellipse center and semi-axes, ellipse
angle) are rounded to the nearest point of a coarser grid.  The distinct
snapped copies form the covering.  When the copy falls outside the family or
lies farther than ``eps`` the grid is halved and the member snapped again; a
member that fails at every level is kept as its own covering member, so every
bucket member is within ``eps`` of the covering by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels as K
from ..errors import FamilyError, RegionError
from .family import RegionFamily, normalize_rows
from .shapes import Ellipse, Polygon, RasterRegion, shape_rows


def grid_spacing(eps: float, A: float, c_snap: float = 2.0) -> int:
    """Snap spacing for covering radius ``eps`` at scale size ``A``."""
    return max(1, int(math.floor(eps * math.sqrt(A) / c_snap)))


@dataclass
class CoveringSet:
    family: RegionFamily = field(repr=False)
    k: int
    eps: float
    spacing: int
    keys: np.ndarray = field(repr=False)    # sorted int64 cover keys, enumeration order
    bucket_size: int
    self_covered: int

    def __len__(self):
        return len(self.keys)

    @property
    def codes(self) -> np.ndarray:
        """``(N, 4)`` kernel encodings of the members."""
        H, W = self.family.domain.shape
        if self.family.kind == "rect":
            return _decode_rect_keys(self.keys, H, W)
        return _decode_tpl_keys(self.keys, H, W)

    def shapes(self):
        return [self.family.decode(c) for c in self.codes]

    def regions(self) -> list[RasterRegion]:
        return [self.family.region(s) for s in self.shapes()]


def encode_codes(family: RegionFamily, codes: np.ndarray) -> np.ndarray:
    """Cover keys of ``(N, 4)`` kernel encodings (inverse of ``CoveringSet.codes``)."""
    H, W = family.domain.shape
    c = np.asarray(codes, dtype=np.int64).reshape(-1, 4)
    bx = _bits(W - 1)
    if family.kind == "rect":
        x0, y0, w, h = c.T
        return (((y0 << _bits(H) | h) << _bits(W) | w) << bx) | x0
    t, oy, ox = c[:, 0], c[:, 1], c[:, 2]
    return ((t << _bits(H - 1) | oy) << bx) | ox


def _bits(v: int) -> int:
    return max(1, int(v).bit_length())


def _decode_rect_keys(keys, H, W):
    bx, bw, bh = _bits(W - 1), _bits(W), _bits(H)
    keys = np.asarray(keys, dtype=np.int64)
    x0 = keys & ((1 << bx) - 1)
    w = (keys >> bx) & ((1 << bw) - 1)
    h = (keys >> (bx + bw)) & ((1 << bh) - 1)
    y0 = keys >> (bx + bw + bh)
    return np.stack([x0, y0, w, h], axis=1).astype(np.int64)


def _decode_tpl_keys(keys, H, W):
    bx, by = _bits(W - 1), _bits(H - 1)
    keys = np.asarray(keys, dtype=np.int64)
    ox = keys & ((1 << bx) - 1)
    oy = (keys >> bx) & ((1 << by) - 1)
    t = keys >> (bx + by)
    return np.stack([t, oy, ox, np.zeros_like(t)], axis=1).astype(np.int64)


def snap_levels(g: int) -> list[int]:
    """Grid spacings tried in turn: ``g, g//2, ...`` down to 2."""
    out = []
    while g > 1:
        out.append(g)
        g //= 2
    return out


def _nearest(v, G):
    return G * ((v + G // 2) // G)


def _snap_maps(family: RegionFamily, g: int, A: float):
    """Per level, template and residue: snapped template and anchor shift."""
    ts = family.templates
    sp = family.spec
    levels = snap_levels(g)
    if family.kind == "ellipse":
        Gs = levels
    else:
        Gs = [lv * sp.vertex_step for lv in levels]
    T = len(ts)
    Gmax = max(Gs) if Gs else 1
    L = max(1, len(levels))
    snap_t = np.full((L, T, Gmax, Gmax), -1, dtype=np.int64)
    snap_dy = np.zeros((L, T, Gmax, Gmax), dtype=np.int64)
    snap_dx = np.zeros((L, T, Gmax, Gmax), dtype=np.int64)
    for lev, (gl, G) in enumerate(zip(levels, Gs)):
        g_theta = max(1, int(math.floor((gl / math.sqrt(A)) / (math.pi / sp.n_angles))))
        for t in range(T):
            m = ts.meta[t]
            for ry in range(G):
                for rx in range(G):
                    if family.kind == "ellipse":
                        ia = _nearest(m["ia"], gl)
                        ib = _nearest(m["ib"], gl)
                        j = _nearest(m["j"], g_theta) % sp.n_angles
                        a = sp.min_axis + ia * sp.axis_step
                        b = sp.min_axis + ib * sp.axis_step
                        if b > a:
                            continue
                        shape = Ellipse(float(_nearest(rx + m["cx"], G)), float(_nearest(ry + m["cy"], G)),
                                        a, b, j * math.pi / sp.n_angles)
                    else:
                        verts = tuple((_nearest(rx + x, G), _nearest(ry + y, G)) for x, y in m["vertices"])
                        try:
                            shape = Polygon(verts)
                        except RegionError:
                            continue
                    rows = shape_rows(shape)
                    if not rows:
                        continue
                    rel, (ay, ax), _ = normalize_rows(rows)
                    u = ts.index.get(rel)
                    if u is None:
                        continue
                    snap_t[lev, t, ry, rx] = u
                    snap_dy[lev, t, ry, rx] = ay - ry
                    snap_dx[lev, t, ry, rx] = ax - rx
    grids = np.asarray(Gs if Gs else [1], dtype=np.int64)
    return grids, snap_t, snap_dy, snap_dx


def bucket_codes(family: RegionFamily, k: int) -> np.ndarray:
    lo, hi = family.bucket_range(k)
    codes = [c for c, _ in family.iter_codes(lo, hi)]
    return np.asarray(codes, dtype=np.int64).reshape(-1, 4)


def covering_set(family: RegionFamily, k: int, eps: float) -> CoveringSet:
    """An ``eps``-covering of scale bucket ``k`` drawn from the family."""
    if not 0 <= eps <= 1:
        raise FamilyError(f"covering radius must lie in [0, 1], got {eps}")
    A = family.n / 2 ** (k - 1)
    g = grid_spacing(eps, A, family.spec.c_snap) if eps > 0 else 1
    key = (k, float(eps), g)
    if key in family._covers:
        return family._covers[key]
    lo, hi = family.bucket_range(k)
    H, W = family.domain.shape
    if eps == 0:
        codes = bucket_codes(family, k)
        cover = CoveringSet(family, k, eps, 1, encode_codes(family, codes), len(codes), len(codes))
    elif family.kind == "rect":
        smin, smax = family.side_bounds
        keys, own = K.rect_cover(family.count2d, lo, hi, smin, smax, smin, smax,
                                 family.a_min, family.cap, family.area_cap, g, float(eps))
        cover = CoveringSet(family, k, eps, g, keys, family.bucket_count(k), int(own))
    else:
        ts = family.templates
        grids, snap_t, snap_dy, snap_dx = _snap_maps(family, g, A)
        keys, own = K.tpl_cover(family.count_rows, ts.tstart, ts.tdr, ts.tc0, ts.tc1, ts.th, ts.tw,
                                ts.tsize, lo, hi, family.a_min, family.cap, float(eps),
                                grids, snap_t, snap_dy, snap_dx)
        cover = CoveringSet(family, k, eps, g, keys, family.bucket_count(k), int(own))
    family._covers[key] = cover
    return cover

"""Region families, their enumeration order and scale buckets.

Rectangles are enumerated directly.  Ellipses and polygons are compiled
into *templates*: distinct rasters up to integer translation, each stored as
row intervals relative to its bounding-box corner.  A family member is then a
``(template, oy, ox)`` placement whose bounding box lies inside the lattice.

Membership: a member's size ``|R|`` is its active-cell count; it must lie in
``[a_min, floor(size_cap_fraction * n)]``, and its unmasked raster area may not
exceed ``floor(size_cap_fraction * width * height)``.  On a full lattice both
bounds coincide.
"""
from __future__ import annotations

import dataclasses
import functools
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import FamilyError, RegionError
from ..lattice import LatticeDomain
from .shapes import Ellipse, Polygon, RasterRegion, Rectangle, clip_rows, shape_rows

KINDS = ("rect", "ellipse", "polygon")


@dataclass(frozen=True)
class FamilySpec:
    """Shape library plus the scan settings that calibrations depend on.

    ``eps_policy`` picks the covering radius for scale ``k`` in the fast scan:
    ``"theory"`` is ``1/(4k^2)``, ``"fixed:<x>"`` a constant radius.
    ``denominator`` is ``"floor"`` (log log term floored at 1) or ``"logplus"``.
    ``kstar_log`` is the base of the inner logarithm in the cutoff scale.
    """

    kind: str = "rect"
    k: int = 3
    M: float = 4.0
    a_min: int = 8
    size_cap_fraction: float = 0.25
    eps_policy: str = "fixed:0.25"
    c_snap: float = 2.0
    denominator: str = "floor"
    kstar_log: str = "e"
    # rectangles
    min_side: int = 1
    max_side: int | None = None
    # ellipses
    min_axis: float = 1.0
    axis_step: float = 0.5
    n_angles: int = 2
    # polygons
    variant: str = "right"
    vertex_step: int = 1
    max_extent: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FamilyError(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.a_min < 3:
            raise FamilyError("a_min must be >= 3 so that |R| - 2 > 0")
        if not 0 < self.size_cap_fraction <= 1:
            raise FamilyError("size_cap_fraction must lie in (0, 1]")
        if self.M < 1:
            raise FamilyError("M must be >= 1")
        if self.denominator not in ("floor", "logplus"):
            raise FamilyError(f"unknown denominator rule {self.denominator!r}")
        if self.kstar_log not in ("e", "2"):
            raise FamilyError(f"kstar_log must be 'e' or '2', got {self.kstar_log!r}")
        if self.kind == "polygon":
            if self.variant not in ("right", "lattice"):
                raise FamilyError(f"unknown polygon variant {self.variant!r}")
            if self.variant == "right" and self.k != 3:
                raise FamilyError("right-triangle families have k = 3")
        eps_for_scale(self.eps_policy, 2)  # validates the policy string

    @classmethod
    def from_dict(cls, d: dict) -> "FamilySpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise FamilyError(f"unknown family keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "FamilySpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def eps_for_scale(policy, k: int) -> float:
    if isinstance(policy, (int, float)):
        eps = float(policy)
    elif policy == "theory":
        eps = 1.0 / (4.0 * k * k)
    elif isinstance(policy, str) and policy.startswith("fixed:"):
        try:
            eps = float(policy.split(":", 1)[1])
        except ValueError as exc:
            raise FamilyError(f"bad eps policy {policy!r}") from exc
    else:
        raise FamilyError(f"unknown eps policy {policy!r}")
    if not 0 <= eps <= 1:
        raise FamilyError(f"covering radius must lie in [0, 1], got {eps}")
    return eps


def bucket_of(size: int, n: int) -> int:
    """Scale index ``k`` with ``n / 2**k < size <= n / 2**(k-1)``."""
    if size < 1 or size > n:
        raise ValueError(f"size {size} outside [1, {n}]")
    k = 1
    while size * (1 << k) <= n:
        k += 1
    return k


def kstar(n: int, inner_log: str = "e") -> int:
    """Largest scale index handled by coverings in the fast scan."""
    inner = math.log(n) if inner_log == "e" else math.log2(n)
    return math.floor(math.log2(n) - 2.0 * math.log2(inner))


@dataclass
class TemplateSet:
    tstart: np.ndarray
    tdr: np.ndarray
    tc0: np.ndarray
    tc1: np.ndarray
    th: np.ndarray
    tw: np.ndarray
    tsize: np.ndarray
    meta: list          # per template: geometry relative to its anchor
    index: dict         # raster key -> template id

    def __len__(self):
        return len(self.th)

    def rows(self, t: int):
        s, e = self.tstart[t], self.tstart[t + 1]
        return list(zip(self.tdr[s:e].tolist(), self.tc0[s:e].tolist(), self.tc1[s:e].tolist()))


def normalize_rows(rows):
    """Shift raster rows to their bounding-box corner: ``(rel_rows, (ay, ax), (h, w))``."""
    ay = min(r for r, _, _ in rows)
    ax = min(c0 for _, c0, _ in rows)
    rel = tuple((r - ay, c0 - ax, c1 - ax) for r, c0, c1 in rows)
    h = max(r for r, _, _ in rel) + 1
    w = max(c1 for _, _, c1 in rel) + 1
    return rel, (ay, ax), (h, w)


def _pack_templates(entries) -> TemplateSet:
    tstart, tdr, tc0, tc1, th, tw, tsize, meta = [0], [], [], [], [], [], [], []
    index = {}
    for rel, (h, w), m in entries:
        if rel in index:
            continue
        index[rel] = len(th)
        for r, c0, c1 in rel:
            tdr.append(r)
            tc0.append(c0)
            tc1.append(c1)
        tstart.append(len(tdr))
        th.append(h)
        tw.append(w)
        tsize.append(sum(c1 - c0 + 1 for _, c0, c1 in rel))
        meta.append(m)
    a = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    return TemplateSet(a(tstart), a(tdr), a(tc0), a(tc1), a(th), a(tw), a(tsize), meta, index)


class RegionFamily:
    """A shape library bound to a lattice domain."""

    def __init__(self, spec: FamilySpec, domain: LatticeDomain):
        self.spec = spec
        self.domain = domain
        H, W = domain.shape
        self.n = domain.n
        self.cap = int(math.floor(spec.size_cap_fraction * domain.n))
        self.area_cap = int(math.floor(spec.size_cap_fraction * W * H))
        self.a_min = spec.a_min
        if self.cap < self.a_min:
            raise FamilyError(f"size cap {self.cap} is below a_min {self.a_min}")
        self.n_buckets = int(math.floor(math.log2(self.n))) + 2
        mask = domain.mask.astype(np.float64)
        C = np.zeros((H + 1, W + 1))
        C[1:, 1:] = mask.cumsum(0).cumsum(1)
        Rc = np.zeros((H, W + 1), dtype=np.int64)
        Rc[:, 1:] = domain.mask.astype(np.int64).cumsum(1)
        self.count2d = C
        self.count_rows = Rc
        self._covers: dict = {}

    # ---------------------------------------------------------------- basics
    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def side_bounds(self):
        H, W = self.domain.shape
        hi = self.spec.max_side if self.spec.max_side is not None else max(H, W)
        return max(1, self.spec.min_side), hi

    @property
    def kstar(self) -> int:
        return kstar(self.n, self.spec.kstar_log)

    def fingerprint_dict(self) -> dict:
        return {"family": self.spec.to_dict(),
                "domain": {"width": self.domain.width, "height": self.domain.height,
                           "mask": self.domain.mask_digest()}}

    def fingerprint(self) -> str:
        import hashlib
        blob = json.dumps(self.fingerprint_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:24]

    def is_member_size(self, size: int) -> bool:
        return self.a_min <= size <= self.cap

    # ------------------------------------------------------------- templates
    @functools.cached_property
    def templates(self) -> TemplateSet:
        if self.kind == "rect":
            raise FamilyError("rectangle families are not template based")
        if self.kind == "ellipse":
            ts = _pack_templates(self._ellipse_entries())
        elif self.spec.variant == "right":
            ts = _pack_templates(self._right_triangle_entries())
        else:
            ts = _pack_templates(self._lattice_polygon_entries())
        if len(ts) == 0:
            raise FamilyError("family has no templates within the size bounds")
        return ts

    def _size_ok(self, rel) -> bool:
        size = sum(c1 - c0 + 1 for _, c0, c1 in rel)
        return self.a_min <= size <= self.area_cap

    def _fits(self, hw) -> bool:
        H, W = self.domain.shape
        return hw[0] <= H and hw[1] <= W

    def _ellipse_entries(self):
        sp = self.spec
        ratio = math.sqrt(sp.M)
        out = []
        nb = 0
        while True:
            b = sp.min_axis + nb * sp.axis_step
            if math.pi * b * b > 1.25 * self.area_cap + 16:
                break
            na = nb
            while True:
                a = sp.min_axis + na * sp.axis_step
                if a > b * ratio + 1e-12 or math.pi * a * b > 1.25 * self.area_cap + 16:
                    break
                for j in range(sp.n_angles):
                    theta = j * math.pi / sp.n_angles
                    rows = shape_rows(Ellipse(0.0, 0.0, a, b, theta))
                    if not rows:
                        continue
                    rel, (ay, ax), hw = normalize_rows(rows)
                    if self._size_ok(rel) and self._fits(hw):
                        out.append((rel, hw, {"a": a, "b": b, "ia": na, "ib": nb, "j": j,
                                              "theta": theta, "cy": -ay, "cx": -ax}))
                na += 1
            nb += 1
        return out

    def _right_triangle_entries(self):
        H, W = self.domain.shape
        out = []
        for q in range(1, H):
            for p in range(1, W):
                if p * q / 2.0 > 1.25 * self.area_cap + 16:
                    break
                for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
                    poly = Polygon(((0, 0), (sx * p, 0), (0, sy * q)))
                    if poly.radius_ratio() > self.spec.M + 1e-12:
                        continue
                    rel, (ay, ax), hw = normalize_rows(shape_rows(poly))
                    if self._size_ok(rel) and self._fits(hw):
                        verts = tuple((x - ax, y - ay) for x, y in poly.vertices)
                        out.append((rel, hw, {"vertices": verts}))
        return out

    def _lattice_polygon_entries(self):
        H, W = self.domain.shape
        st = self.spec.vertex_step
        E = self.spec.max_extent if self.spec.max_extent is not None else min(H, W) - 1
        pts = [(x, y) for y in range(0, E + 1, st) for x in range(-E, E + 1, st)
               if y > 0 or x > 0]
        out = []
        for combo in itertools.combinations(pts, self.spec.k - 1):
            verts = ((0, 0),) + combo
            try:
                poly = Polygon(verts)
            except RegionError:
                continue
            if poly.vertices[0] != (0, 0):
                continue  # origin must be the lowest vertex so each shape appears once
            if poly.radius_ratio() > self.spec.M + 1e-12:
                continue
            rel, (ay, ax), hw = normalize_rows(shape_rows(poly))
            if self._size_ok(rel) and self._fits(hw):
                verts = tuple((x - ax, y - ay) for x, y in poly.vertices)
                out.append((rel, hw, {"vertices": verts}))
        return out

    def template_shape(self, t: int, oy: int, ox: int):
        m = self.templates.meta[t]
        if self.kind == "ellipse":
            return Ellipse(ox + m["cx"], oy + m["cy"], m["a"], m["b"], m["theta"])
        return Polygon(tuple((ox + x, oy + y) for x, y in m["vertices"]))

    # -------------------------------------------------------------- members
    def decode(self, code) -> object:
        """Shape for a kernel-encoded region."""
        a0, a1, a2, a3 = (int(v) for v in code)
        if self.kind == "rect":
            return Rectangle(a0, a1, a2, a3)
        return self.template_shape(a0, a1, a2)

    def region(self, shape) -> RasterRegion:
        return clip_rows(shape_rows(shape), self.domain)

    def rect_count(self, x0, y0, w, h) -> int:
        C = self.count2d
        return int(round(C[y0 + h, x0 + w] - C[y0, x0 + w] - C[y0 + h, x0] + C[y0, x0]))

    def tpl_count(self, t, oy, ox) -> int:
        ts = self.templates
        s, e = ts.tstart[t], ts.tstart[t + 1]
        cnt = 0
        for r, c0, c1 in zip(ts.tdr[s:e], ts.tc0[s:e], ts.tc1[s:e]):
            cnt += int(self.count_rows[oy + r, ox + c1 + 1] - self.count_rows[oy + r, ox + c0])
        return cnt

    def iter_codes(self, lo: int = 0, hi: int | None = None) -> Iterator[tuple[tuple, int]]:
        """``(code, size)`` for members with ``lo < size <= hi``, in enumeration order."""
        hi = self.cap if hi is None else min(hi, self.cap)
        H, W = self.domain.shape
        if self.kind == "rect":
            smin, smax = self.side_bounds
            for y0 in range(H):
                for h in range(smin, min(smax, H - y0) + 1):
                    for w in range(smin, min(smax, W) + 1):
                        if w * h > self.area_cap:
                            break
                        for x0 in range(W - w + 1):
                            s = self.rect_count(x0, y0, w, h)
                            if s > lo and s <= hi and s >= self.a_min:
                                yield (x0, y0, w, h), s
            return
        ts = self.templates
        for t in range(len(ts)):
            if ts.tsize[t] <= lo or ts.tsize[t] < self.a_min:
                continue
            for oy in range(H - ts.th[t] + 1):
                for ox in range(W - ts.tw[t] + 1):
                    s = self.tpl_count(t, oy, ox)
                    if s > lo and s <= hi and s >= self.a_min:
                        yield (t, oy, ox, 0), s

    def bucket_range(self, k: int) -> tuple[int, int]:
        """Sizes ``(lo, hi]`` of scale ``k`` (integer bounds)."""
        return self.n // (1 << k), self.n // (1 << (k - 1))

    def bucket_count(self, k: int) -> int:
        from .. import _kernels as K
        lo, hi = self.bucket_range(k)
        if self.kind == "rect":
            smin, smax = self.side_bounds
            return int(K.rect_bucket_count(self.count2d, lo, hi, smin, smax, smin, smax,
                                           self.a_min, self.cap, self.area_cap))
        ts = self.templates
        return int(K.tpl_bucket_count(self.count_rows, ts.tstart, ts.tdr, ts.tc0, ts.tc1,
                                      ts.th, ts.tw, ts.tsize, lo, hi, self.a_min, self.cap))

    def scales(self) -> list[int]:
        return list(range(2, self.n_buckets))


@dataclass
class ScaleBucket:
    k: int
    lo: int
    hi: int
    count: int
    family: RegionFamily = field(repr=False)

    def members(self):
        """Stream of ``(shape, size)`` in enumeration order."""
        for code, s in self.family.iter_codes(self.lo, self.hi):
            yield self.family.decode(code), s


def enumerate_family(family: RegionFamily) -> Iterator:
    """Every member shape in the family's deterministic enumeration order.

    Rectangles run over ``(y0, h, w, x0)``; template families over
    ``(template, oy, ox)``.
    """
    for code, _ in family.iter_codes():
        yield family.decode(code)


def scale_buckets(family: RegionFamily) -> list[ScaleBucket]:
    out = []
    for k in family.scales():
        lo, hi = family.bucket_range(k)
        out.append(ScaleBucket(k, lo, hi, family.bucket_count(k), family))
    return out

"""Candidate region shapes, their rasterization and the overlap semimetric.

A cell belongs to a shape when its center does: cell ``(row i, col j)`` sits
at the point ``(x=j, y=i)``, and boundary points count as inside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import RegionError

TOL = 1e-9


@dataclass(frozen=True)
class Rectangle:
    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise RegionError(f"rectangle sides must be >= 1, got {self.w}x{self.h}")

    @property
    def kind(self):
        return "rect"

    def params(self):
        return {"x0": self.x0, "y0": self.y0, "w": self.w, "h": self.h}


@dataclass(frozen=True)
class Ellipse:
    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise RegionError(f"ellipse needs a >= b > 0, got a={self.a}, b={self.b}")

    @property
    def kind(self):
        return "ellipse"

    @property
    def condition(self) -> float:
        """Eigenvalue ratio of the shape matrix, (a/b)^2."""
        return (self.a / self.b) ** 2

    def params(self):
        return {"cx": self.cx, "cy": self.cy, "a": self.a, "b": self.b, "theta": self.theta}


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class Polygon:
    """Convex polygon given by its vertices as ``(x, y)`` pairs.

    Vertices are stored counter-clockwise starting from the lowest ``(y, x)``
    vertex so that equal polygons compare equal.
    """

    vertices: tuple

    def __post_init__(self):
        pts = [(float(x), float(y)) for x, y in self.vertices]
        if len(pts) < 3:
            raise RegionError("polygon needs at least 3 vertices")
        cx = sum(p[0] for p in pts) / len(pts)
        cy = sum(p[1] for p in pts) / len(pts)
        pts.sort(key=lambda p: math.atan2(p[1] - cy, p[0] - cx))
        k = len(pts)
        for i in range(k):
            if _cross(pts[i], pts[(i + 1) % k], pts[(i + 2) % k]) <= 0:
                raise RegionError(f"vertices {self.vertices} are not in strictly convex position")
        start = min(range(k), key=lambda i: (pts[i][1], pts[i][0]))
        pts = pts[start:] + pts[:start]
        norm = tuple((int(x) if float(x).is_integer() else x, int(y) if float(y).is_integer() else y)
                     for x, y in pts)
        object.__setattr__(self, "vertices", norm)

    @property
    def kind(self):
        return "polygon"

    @property
    def centroid(self):
        k = len(self.vertices)
        return (sum(v[0] for v in self.vertices) / k, sum(v[1] for v in self.vertices) / k)

    def radius_ratio(self) -> float:
        """max/min distance from the vertices to their average."""
        cx, cy = self.centroid
        r = [math.hypot(x - cx, y - cy) for x, y in self.vertices]
        return max(r) / min(r)

    def edge_lengths(self):
        v = self.vertices
        return [math.hypot(v[(i + 1) % len(v)][0] - v[i][0], v[(i + 1) % len(v)][1] - v[i][1])
                for i in range(len(v))]

    def area(self) -> float:
        v = self.vertices
        return 0.5 * abs(sum(v[i][0] * v[(i + 1) % len(v)][1] - v[(i + 1) % len(v)][0] * v[i][1]
                             for i in range(len(v))))

    def translated(self, dx, dy) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))

    def params(self):
        return {"vertices": [list(v) for v in self.vertices]}


RegionShape = Rectangle | Ellipse | Polygon


def shape_rows(shape) -> list[tuple[int, int, int]]:
    """Unclipped raster of ``shape`` as ``(row, col_start, col_end)`` with inclusive ends."""
    if isinstance(shape, Rectangle):
        return [(r, shape.x0, shape.x0 + shape.w - 1) for r in range(shape.y0, shape.y0 + shape.h)]
    if isinstance(shape, Ellipse):
        return _ellipse_rows(shape)
    if isinstance(shape, Polygon):
        return _polygon_rows(shape)
    raise TypeError(f"unknown shape {shape!r}")


def _ellipse_rows(e: Ellipse):
    c, s = math.cos(e.theta), math.sin(e.theta)
    ia, ib = 1.0 / (e.a * e.a), 1.0 / (e.b * e.b)
    A = c * c * ia + s * s * ib
    B = 2.0 * c * s * (ia - ib)
    C = s * s * ia + c * c * ib
    # vertical half-extent of the rotated ellipse
    ext = math.sqrt(A / (A * C - 0.25 * B * B))
    rows = []
    for i in range(math.ceil(e.cy - ext - TOL), math.floor(e.cy + ext + TOL) + 1):
        dy = i - e.cy
        disc = (B * dy) ** 2 - 4.0 * A * (C * dy * dy - 1.0)
        if disc < 0:
            if disc < -TOL:
                continue
            disc = 0.0
        root = math.sqrt(disc)
        lo = (-B * dy - root) / (2.0 * A)
        hi = (-B * dy + root) / (2.0 * A)
        c0 = math.ceil(e.cx + lo - TOL)
        c1 = math.floor(e.cx + hi + TOL)
        if c1 >= c0:
            rows.append((i, c0, c1))
    return rows


def _polygon_rows(p: Polygon):
    v = p.vertices
    ys = [y for _, y in v]
    rows = []
    for i in range(math.ceil(min(ys) - TOL), math.floor(max(ys) + TOL) + 1):
        xs = []
        for j in range(len(v)):
            (xa, ya), (xb, yb) = v[j], v[(j + 1) % len(v)]
            if min(ya, yb) - TOL <= i <= max(ya, yb) + TOL:
                if abs(yb - ya) < TOL:
                    xs.extend((xa, xb))
                else:
                    t = min(max((i - ya) / (yb - ya), 0.0), 1.0)
                    xs.append(xa + t * (xb - xa))
        if not xs:
            continue
        c0 = math.ceil(min(xs) - TOL)
        c1 = math.floor(max(xs) + TOL)
        if c1 >= c0:
            rows.append((i, c0, c1))
    return rows


@dataclass(frozen=True, eq=False)
class RasterRegion:
    """Sorted, disjoint row intervals ``(row, col_start, col_end)``, ends inclusive."""

    intervals: np.ndarray = field(repr=False)
    size: int = 0

    @classmethod
    def from_intervals(cls, intervals) -> "RasterRegion":
        arr = np.asarray(sorted(tuple(map(int, t)) for t in intervals), dtype=np.int64).reshape(-1, 3)
        size = int(np.sum(arr[:, 2] - arr[:, 1] + 1)) if len(arr) else 0
        arr.setflags(write=False)
        return cls(intervals=arr, size=size)

    @classmethod
    def from_cells(cls, cells) -> "RasterRegion":
        by_row: dict[int, list[int]] = {}
        for r, c in cells:
            by_row.setdefault(int(r), []).append(int(c))
        out = []
        for r in sorted(by_row):
            cols = sorted(set(by_row[r]))
            start = prev = cols[0]
            for c in cols[1:]:
                if c != prev + 1:
                    out.append((r, start, prev))
                    start = c
                prev = c
            out.append((r, start, prev))
        return cls.from_intervals(out)

    def cells(self) -> set[tuple[int, int]]:
        return {(int(r), c) for r, c0, c1 in self.intervals for c in range(int(c0), int(c1) + 1)}

    def to_mask(self, shape) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        for r, c0, c1 in self.intervals:
            m[r, c0:c1 + 1] = True
        return m

    def __eq__(self, other):
        if not isinstance(other, RasterRegion):
            return NotImplemented
        return np.array_equal(self.intervals, other.intervals)

    def __hash__(self):
        return hash(self.intervals.tobytes())


def clip_rows(rows, domain) -> RasterRegion:
    """Intersect unclipped raster rows with the domain's active cells."""
    H, W = domain.shape
    out = []
    for r, c0, c1 in rows:
        if r < 0 or r >= H:
            continue
        c0, c1 = max(c0, 0), min(c1, W - 1)
        if c1 < c0:
            continue
        seg = domain.mask[r, c0:c1 + 1]
        if seg.all():
            out.append((r, c0, c1))
            continue
        # split the row at inactive cells
        idx = np.flatnonzero(np.diff(np.concatenate(([0], seg.view(np.int8), [0]))))
        for s, e in zip(idx[::2], idx[1::2]):
            out.append((r, c0 + int(s), c0 + int(e) - 1))
    return RasterRegion.from_intervals(out)


def rasterize(shape, domain) -> RasterRegion:
    """Active cells of ``domain`` whose centers lie in ``shape``."""
    region = clip_rows(shape_rows(shape), domain)
    if region.size == 0:
        raise RegionError(f"{shape!r} does not intersect the active domain")
    return region


def semimetric(r1: RasterRegion, r2: RasterRegion) -> float:
    """``1 - |R1 & R2| / sqrt(|R1| |R2|)``."""
    if r1.size == 0 or r2.size == 0:
        raise RegionError("semimetric undefined for empty regions")
    inter = intersection_size(r1, r2)
    return max(0.0, 1.0 - inter / math.sqrt(r1.size * r2.size))


def intersection_size(r1: RasterRegion, r2: RasterRegion) -> int:
    a, b = r1.intervals, r2.intervals
    i = j = total = 0
    while i < len(a) and j < len(b):
        ra, rb = a[i, 0], b[j, 0]
        if ra < rb or (ra == rb and a[i, 2] < b[j, 1]):
            i += 1
            continue
        if rb < ra or (ra == rb and b[j, 2] < a[i, 1]):
            j += 1
            continue
        total += int(min(a[i, 2], b[j, 2]) - max(a[i, 1], b[j, 1]) + 1)
        if a[i, 2] < b[j, 2]:
            i += 1
        else:
            j += 1
    return total

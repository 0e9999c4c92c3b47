"""Shape families, rasterization, the overlap semimetric and covering sets."""
from .covering import CoveringSet, covering_set, grid_spacing
from .family import (FamilySpec, RegionFamily, ScaleBucket, bucket_of, enumerate_family,
                     eps_for_scale, kstar, scale_buckets)
from .shapes import (Ellipse, Polygon, RasterRegion, Rectangle, intersection_size, rasterize,
                     semimetric, shape_rows)

__all__ = [
    "CoveringSet", "Ellipse", "FamilySpec", "Polygon", "RasterRegion", "Rectangle",
    "RegionFamily", "ScaleBucket", "bucket_of", "covering_set", "enumerate_family",
    "eps_for_scale", "grid_spacing", "intersection_size", "kstar", "rasterize",
    "scale_buckets", "semimetric", "shape_rows",
]

"""
Spatial Primitives
Zonal pixel overlay, street buffering and polygon boolean operations
"""

import logging
import math
from typing import Iterable, NamedTuple, Sequence, Tuple, Union

import numpy as np
import shapely
from shapely.geometry import LineString, MultiPolygon, Polygon
from shapely.errors import GEOSException
from shapely.geometry.base import BaseGeometry
from shapely.ops import unary_union

from ..exceptions import ConfigurationError, GeometryDomainError
from ..models.geo import Buffer, GreenRaster
from ..models.network import StreetSegment

logger = logging.getLogger(__name__)

# 16 segments per quarter circle for round joins
QUAD_SEGMENTS = 16

Bounds = Tuple[float, float, float, float]


class ZonalFraction(NamedTuple):
    """Result of a pixel-center overlay"""
    fraction: float
    green_pixels: int
    total_pixels: int
    no_coverage: bool


def looks_geographic(bounds: Bounds) -> bool:
    """True when every coordinate fits the longitude/latitude range"""
    minx, miny, maxx, maxy = bounds
    return -180.0 <= minx <= maxx <= 180.0 and -90.0 <= miny <= maxy <= 90.0


def require_projected(bounds: Bounds, label: str = "inputs"):
    """
    Reject an extent that fits the longitude/latitude range; every length
    and area in the engine is in meters

    Raises:
        ConfigurationError: If every coordinate lies within lon/lat bounds
    """
    if looks_geographic(bounds):
        raise ConfigurationError(
            f"{label}: extent {tuple(round(v, 6) for v in bounds)} looks like longitude/latitude degrees; "
            f"reproject to a metric coordinate system"
        )


def bounds_overlap(a: Bounds, b: Bounds) -> bool:
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def union_bounds(boxes: Iterable[Bounds]) -> Bounds:
    """Smallest box holding every given box"""
    boxes = list(boxes)
    if not boxes:
        raise GeometryDomainError("no geometries to take an extent from")
    return (min(b[0] for b in boxes), min(b[1] for b in boxes), max(b[2] for b in boxes), max(b[3] for b in boxes))


def check_same_crs(a: Bounds, b: Bounds, label: str = "inputs"):
    """
    Reject pairs of extents that cannot share one projected metric system

    Raises:
        ConfigurationError: One extent looks like lon/lat degrees, the other
            like meters, and they do not overlap
    """
    if looks_geographic(a) != looks_geographic(b) and not bounds_overlap(a, b):
        raise ConfigurationError(
            f"{label}: coordinate ranges {tuple(round(v, 3) for v in a)} and "
            f"{tuple(round(v, 3) for v in b)} look like different coordinate systems"
        )


class PixelWindow:
    """
    Pixels of a raster whose centers fall strictly inside a region

    The window is computed once per region; masks of further geometries are
    expressed in the same window coordinates so they can be combined.
    """

    def __init__(self, raster: GreenRaster, region: BaseGeometry):
        self.raster = raster
        self.region = region
        self.rows, self.cols = raster.window(region.bounds)
        if self.rows.stop > self.rows.start and self.cols.stop > self.cols.start:
            xs, ys = raster.centers(self.rows, self.cols)
            shapely.prepare(region)
            self.mask = shapely.contains_xy(region, xs, ys)
        else:
            self.mask = np.zeros((0, 0), dtype=bool)

    @property
    def total(self) -> int:
        return int(self.mask.sum())

    def cells(self, raster: GreenRaster = None) -> np.ndarray:
        """Cell bits of `raster` (same grid) inside the window, masked to the region"""
        source = self.raster if raster is None else raster
        return source.cells[self.rows, self.cols] & self.mask

    def submask(self, geometry: BaseGeometry) -> np.ndarray:
        """Region pixels whose centers also fall inside `geometry`"""
        out = np.zeros_like(self.mask)
        if out.size == 0:
            return out
        rows, cols = self.raster.window(geometry.bounds)
        r0, r1 = max(rows.start, self.rows.start), min(rows.stop, self.rows.stop)
        c0, c1 = max(cols.start, self.cols.start), min(cols.stop, self.cols.stop)
        if r1 <= r0 or c1 <= c0:
            return out
        xs, ys = self.raster.centers(slice(r0, r1), slice(c0, c1))
        inside = shapely.contains_xy(geometry, xs, ys)
        out[r0 - self.rows.start:r1 - self.rows.start, c0 - self.cols.start:c1 - self.cols.start] = inside
        return out & self.mask


def rasterize_fraction(raster: GreenRaster, region: BaseGeometry) -> ZonalFraction:
    """
    Share of green pixels among the pixels whose centers fall in `region`

    Args:
        raster: Binary green grid
        region: Polygon in the raster's coordinate system

    Returns:
        ZonalFraction; fraction is 0 with `no_coverage` set when the region
        holds no pixel center

    Raises:
        GeometryDomainError: If the region is empty or invalid
        ConfigurationError: If region and raster look like different CRSs
    """
    if region is None or region.is_empty:
        raise GeometryDomainError("zonal region is empty")
    if not region.is_valid:
        raise GeometryDomainError("zonal region is not a valid polygon")
    check_same_crs(raster.bounds, region.bounds, "raster/region")

    window = PixelWindow(raster, region)
    total = window.total
    if total == 0:
        logger.debug(f"Region with bounds {region.bounds} covers no pixel centers")
        return ZonalFraction(0.0, 0, 0, True)
    green = int(window.cells().sum())
    return ZonalFraction(green / total, green, total, False)


def _segment_line(segment: Union[StreetSegment, LineString, Sequence]) -> Tuple[str, LineString]:
    if isinstance(segment, StreetSegment):
        return segment.id, segment.geometry
    if isinstance(segment, LineString):
        return "", segment
    return "", LineString(segment)


def buffer_polyline(segment: Union[StreetSegment, LineString, Sequence], half_width: float) -> Buffer:
    """
    Flat-capped, round-joined buffer around a street centerline

    Args:
        segment: StreetSegment, LineString or coordinate sequence
        half_width: Distance on either side in meters

    Returns:
        Buffer tagged with the segment id (empty id for bare lines)

    Raises:
        GeometryDomainError: Zero-length line or non-positive half width
    """
    if not half_width > 0:
        raise GeometryDomainError(f"half_width must be positive, got {half_width}")
    try:
        segment_id, line = _segment_line(segment)
    except (ValueError, GEOSException) as exc:
        raise GeometryDomainError(f"degenerate polyline: {exc}") from exc
    if line.is_empty or line.length <= 0:
        raise GeometryDomainError(f"segment '{segment_id}' has zero length")

    geometry = line.buffer(half_width, quad_segs=QUAD_SEGMENTS, cap_style="flat", join_style="round")
    return Buffer(source_segment_id=segment_id, geometry=geometry, half_width=float(half_width))


def buffer_segments(segments: Iterable[StreetSegment], half_width: float) -> list:
    return [buffer_polyline(segment, half_width) for segment in segments]


def polygonal_part(geometry: BaseGeometry) -> BaseGeometry:
    """Drop points/lines a boolean operation may produce; empty becomes Polygon()"""
    if geometry.is_empty:
        return Polygon()
    if isinstance(geometry, (Polygon, MultiPolygon)):
        return geometry
    parts = [part for part in shapely.get_parts(geometry) if isinstance(part, (Polygon, MultiPolygon)) and not part.is_empty]
    if not parts:
        return Polygon()
    merged = unary_union(parts)
    return merged if not merged.is_empty else Polygon()


def polygon_ops(a: BaseGeometry, b: BaseGeometry, op: str) -> BaseGeometry:
    """
    Boolean operation on two polygons

    Args:
        a, b: Valid (multi)polygons, possibly empty
        op: One of intersect, subtract, union

    Returns:
        Valid polygonal result, Polygon() when empty

    Raises:
        GeometryDomainError: Invalid input or unknown op
    """
    for label, geometry in (("a", a), ("b", b)):
        if not isinstance(geometry, (Polygon, MultiPolygon)):
            raise GeometryDomainError(f"polygon_ops: operand {label} is a {geometry.geom_type}")
        if not geometry.is_valid:
            raise GeometryDomainError(f"polygon_ops: operand {label} is invalid")

    if op == "intersect":
        result = a.intersection(b)
    elif op == "subtract":
        result = a.difference(b)
    elif op == "union":
        result = a.union(b)
    else:
        raise GeometryDomainError(f"unknown polygon operation '{op}'")
    return polygonal_part(result)


def rasterize_vector_cover(polygons: Iterable[BaseGeometry], bounds: Bounds, cell_size: float = 1.0) -> GreenRaster:
    """
    Burn vector green cover into a binary grid by pixel-center containment

    The grid starts at (minx, miny) and extends up to whole cells past (maxx, maxy).
    """
    if cell_size <= 0:
        raise GeometryDomainError(f"cell_size must be positive, got {cell_size}")
    minx, miny, maxx, maxy = bounds
    width = max(int(math.ceil((maxx - minx) / cell_size - 1e-9)), 1)
    height = max(int(math.ceil((maxy - miny) / cell_size - 1e-9)), 1)
    raster = GreenRaster(origin=(minx, miny), cell_size=cell_size, cells=np.zeros((height, width), dtype=bool))

    cells = np.zeros((height, width), dtype=bool)
    count = 0
    for polygon in polygons:
        if polygon.is_empty:
            continue
        window = PixelWindow(raster, polygon)
        if window.mask.size:
            cells[window.rows, window.cols] |= window.mask
        count += 1
    logger.info(f"Rasterized {count} cover polygons into a {width}x{height} grid at {cell_size} m")
    return raster.with_cells(cells)

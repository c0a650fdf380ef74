"""
Greenery Metrics
Total, on-road (NDVI and street imagery) and off-road greenery per area
"""

import logging
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from shapely import STRtree
from shapely.geometry import Point

from ..exceptions import GeometryDomainError
from ..models.geo import AreaUnit, Buffer, GreenRaster, GreenSpacePolygon
from ..models.greenery import StreetImageRecord
from ..models.network import ChoiceScores, StreetSegment
from .geometry import PixelWindow, bounds_overlap, rasterize_fraction

logger = logging.getLogger(__name__)


class GreenDecomposition(NamedTuple):
    """Public green pixels of an area split by street-buffer coverage"""
    onroad_pixels: int
    offroad_pixels: int
    public_green_pixels: int
    area_pixels: int


class AreaAggregate(NamedTuple):
    """Weighted and plain means of per-segment scores"""
    weighted: Optional[float]
    unweighted: Optional[float]
    segments_used: int
    fell_back: bool


def area_window(area: AreaUnit, raster: GreenRaster) -> PixelWindow:
    """
    Pixel window of an area

    Raises:
        GeometryDomainError: If the area lies outside the raster extent
    """
    if not bounds_overlap(area.boundary.bounds, raster.bounds):
        raise GeometryDomainError(f"area {area.id} lies outside the raster extent")
    return PixelWindow(raster, area.boundary)


def total_ndvi(area: AreaUnit, raster: GreenRaster) -> float:
    """Share of the area's pixels that are green"""
    if not bounds_overlap(area.boundary.bounds, raster.bounds):
        raise GeometryDomainError(f"area {area.id} lies outside the raster extent")
    return rasterize_fraction(raster, area.boundary).fraction


def public_greenery(raster: GreenRaster, parks: Sequence[GreenSpacePolygon]) -> GreenRaster:
    """
    Keep green bits only where some public park or garden covers the pixel center

    Restricted polygons are ignored.
    """
    covered = np.zeros_like(raster.cells)
    public = [park for park in parks if park.is_public]
    for park in public:
        window = PixelWindow(raster, park.boundary)
        if window.mask.size:
            covered[window.rows, window.cols] |= window.mask
    logger.debug(f"Public green mask built from {len(public)} of {len(parks)} polygons")
    return raster.with_cells(raster.cells & covered)


def assign_segments(segments: Sequence[StreetSegment], areas: Sequence[AreaUnit]) -> Dict[str, List[int]]:
    """
    Map each area id to the indices of segments whose midpoint it contains

    A midpoint on a shared border goes to the first area in id order.
    """
    ordered = sorted(areas, key=lambda a: a.id)
    tree = STRtree([a.boundary for a in ordered])
    assignment: Dict[str, List[int]] = {a.id: [] for a in ordered}
    midpoints = [Point(s.midpoint) for s in segments]
    for index, point in enumerate(midpoints):
        hits = tree.query(point, predicate="intersects")
        if len(hits):
            assignment[ordered[int(min(hits))].id].append(index)
    return assignment


def _weights_for(buffers: Sequence[Buffer], weights: ChoiceScores) -> np.ndarray:
    lookup = weights.weight_map()
    try:
        return np.array([lookup[b.source_segment_id] for b in buffers], dtype=float)
    except KeyError as exc:
        raise GeometryDomainError(f"no choice weight for segment {exc.args[0]}") from exc


def aggregate_segment_scores(scores: Sequence[float], weights: Sequence[float]) -> AreaAggregate:
    """
    Σ w·g / Σ w, or the plain mean when every weight is zero

    Segments without a score (None / NaN) are left out of both means.
    """
    g = np.array([np.nan if s is None else s for s in scores], dtype=float)
    w = np.asarray(weights, dtype=float)
    keep = ~np.isnan(g)
    g, w = g[keep], w[keep]
    if g.size == 0:
        return AreaAggregate(None, None, 0, False)
    plain = float(g.mean())
    total_weight = float(w.sum())
    if total_weight > 0:
        return AreaAggregate(float(np.dot(w, g) / total_weight), plain, int(g.size), False)
    return AreaAggregate(plain, plain, int(g.size), True)


def segment_ndvi_scores(window: PixelWindow, public_green: GreenRaster, buffers: Sequence[Buffer],
                        per_buffer_denominator: bool = False) -> np.ndarray:
    """
    g(i) for each buffer: public green pixels of B_i inside the area over the
    area's pixel count (or over B_i's own pixels in the area)
    """
    green = window.cells(public_green)
    area_pixels = window.total
    scores = np.zeros(len(buffers), dtype=float)
    for i, buffer in enumerate(buffers):
        inside = window.submask(buffer.geometry)
        denominator = int(inside.sum()) if per_buffer_denominator else area_pixels
        if denominator:
            scores[i] = int((green & inside).sum()) / denominator
    return scores


def onroad_ndvi_detail(area: AreaUnit, public_green: GreenRaster, buffers: Sequence[Buffer],
                       weights: ChoiceScores, per_buffer_denominator: bool = False,
                       window: Optional[PixelWindow] = None) -> AreaAggregate:
    window = window or area_window(area, public_green)
    if not buffers:
        logger.warning(f"Area {area.id} has no street segments; on-road NDVI set to 0")
        return AreaAggregate(0.0, 0.0, 0, False)
    scores = segment_ndvi_scores(window, public_green, buffers, per_buffer_denominator)
    return aggregate_segment_scores(scores, _weights_for(buffers, weights))


def onroad_ndvi(area: AreaUnit, public_green: GreenRaster, buffers: Sequence[Buffer], weights: ChoiceScores,
                per_buffer_denominator: bool = False) -> float:
    """
    Choice-weighted on-road greenery from the green cover layer

    Args:
        area: Area whose pixels form the denominator
        public_green: Output of public_greenery
        buffers: Buffers of the segments assigned to the area
        weights: Choice scores on the full graph
        per_buffer_denominator: Divide by the buffer's pixels instead of the area's

    Returns:
        Score in [0, 1]; 0 when the area has no segments
    """
    return onroad_ndvi_detail(area, public_green, buffers, weights, per_buffer_denominator).weighted


class ImageIndex:
    """STRtree over street image locations"""

    def __init__(self, images: Sequence[StreetImageRecord]):
        self.images = list(images)
        self.fractions = np.array([img.green_fraction for img in self.images], dtype=float)
        self.tree = STRtree([Point(img.location) for img in self.images]) if self.images else None

    def inside(self, geometry) -> np.ndarray:
        if self.tree is None:
            return np.array([], dtype=int)
        return np.sort(self.tree.query(geometry, predicate="contains"))


def segment_gsv_scores(index: ImageIndex, buffers: Sequence[Buffer], aggregation: str = "mean") -> List[Optional[float]]:
    """Per-buffer image green score; None for buffers holding no image"""
    if aggregation not in ("mean", "sum"):
        raise ValueError(f"unknown image aggregation '{aggregation}'")
    scores: List[Optional[float]] = []
    for buffer in buffers:
        hits = index.inside(buffer.geometry)
        if hits.size == 0:
            scores.append(None)
        elif aggregation == "mean":
            scores.append(float(index.fractions[hits].mean()))
        else:
            scores.append(float(index.fractions[hits].sum()))
    return scores


def onroad_gsv_detail(area: AreaUnit, images, buffers: Sequence[Buffer], weights: ChoiceScores,
                      aggregation: str = "mean") -> AreaAggregate:
    index = images if isinstance(images, ImageIndex) else ImageIndex(images)
    scores = segment_gsv_scores(index, buffers, aggregation)
    result = aggregate_segment_scores(scores, _weights_for(buffers, weights))
    if result.segments_used == 0:
        logger.warning(f"Area {area.id} has no street images inside its buffers")
    return result


def onroad_gsv(area: AreaUnit, images, buffers: Sequence[Buffer], weights: ChoiceScores,
               aggregation: str = "mean") -> Optional[float]:
    """
    Choice-weighted on-road greenery from street-level images

    `images` may be a list of StreetImageRecord or a prebuilt ImageIndex.
    Segments without images are left out; None when no segment has one.
    """
    return onroad_gsv_detail(area, images, buffers, weights, aggregation).weighted


def decompose_public_green(area: AreaUnit, public_green: GreenRaster, buffers: Sequence[Buffer],
                           window: Optional[PixelWindow] = None) -> GreenDecomposition:
    """Split the area's public green pixels into inside-any-buffer and outside-every-buffer"""
    window = window or area_window(area, public_green)
    green = window.cells(public_green)
    covered = np.zeros_like(window.mask)
    for buffer in buffers:
        covered |= window.submask(buffer.geometry)
    onroad = int((green & covered).sum())
    public = int(green.sum())
    return GreenDecomposition(onroad, public - onroad, public, window.total)


def offroad(area: AreaUnit, public_green: GreenRaster, buffers: Sequence[Buffer]) -> float:
    """Public green pixels of the area outside every buffer, over the area's pixels"""
    parts = decompose_public_green(area, public_green, buffers)
    if parts.area_pixels == 0:
        logger.warning(f"Area {area.id} covers no pixel centers; off-road set to 0")
        return 0.0
    return parts.offroad_pixels / parts.area_pixels


def buffers_touching(area: AreaUnit, buffers: Sequence[Buffer], tree: Optional[STRtree] = None) -> List[Buffer]:
    """Buffers whose geometry intersects the area, in input order"""
    tree = tree or STRtree([b.geometry for b in buffers])
    hits = np.sort(tree.query(area.boundary, predicate="intersects"))
    return [buffers[int(i)] for i in hits]

"""
Choropleth Export
Per-area values as GeoJSON and as a static SVG on a sequential green ramp
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from matplotlib import colormaps
from matplotlib.colors import to_hex
from shapely.geometry import MultiPolygon, Polygon

from ..core.geometry import union_bounds
from ..exceptions import GeometryDomainError
from ..models.geo import AreaUnit
from ..storage.writers import feature, write_geojson

logger = logging.getLogger(__name__)

# darker means greener
COLOR_RAMP = "Greens"
NO_DATA_FILL = "#d9d9d9"
NO_DATA_STROKE = "#969696"
AREA_STROKE = "#ffffff"
SVG_WIDTH = 800.0
LEGEND_STEPS = 5
LEGEND_HEIGHT = 60.0


def standardize(values: Mapping[str, Optional[float]]) -> Dict[str, Optional[float]]:
    """
    z-scores over the non-missing values

    A constant set maps to all zeros; missing values stay None.
    """
    present = {k: float(v) for k, v in values.items() if v is not None and not math.isnan(float(v))}
    if not present:
        return {k: None for k in values}
    array = np.array(list(present.values()))
    mean, std = float(array.mean()), float(array.std())
    return {
        k: (None if k not in present else ((present[k] - mean) / std if std > 0 else 0.0))
        for k in values
    }


def ramp_positions(scores: Mapping[str, Optional[float]]) -> Dict[str, Optional[float]]:
    """Scores stretched onto [0, 1] for the color ramp; a constant set sits mid-ramp"""
    present = [v for v in scores.values() if v is not None]
    if not present:
        return dict(scores)
    lo, hi = min(present), max(present)
    return {k: (None if v is None else ((v - lo) / (hi - lo) if hi > lo else 0.5)) for k, v in scores.items()}


def ramp_color(position: Optional[float]) -> str:
    if position is None:
        return NO_DATA_FILL
    return to_hex(colormaps[COLOR_RAMP](float(position)))


class SvgCanvas:
    """Maps projected coordinates onto an SVG viewport with y pointing down"""

    def __init__(self, bounds: Tuple[float, float, float, float], width: float = SVG_WIDTH):
        minx, miny, maxx, maxy = bounds
        span_x, span_y = maxx - minx, maxy - miny
        if span_x <= 0 or span_y <= 0:
            raise GeometryDomainError("choropleth extent has no area")
        self.minx, self.maxy = minx, maxy
        self.scale = width / span_x
        self.width = width
        self.height = span_y * self.scale

    def ring(self, coords) -> str:
        points = [f"{(x - self.minx) * self.scale:.2f},{(self.maxy - y) * self.scale:.2f}" for x, y, *_ in coords]
        return "M" + " L".join(points[:-1]) + " Z"

    def path(self, geometry) -> str:
        polygons: Sequence[Polygon] = geometry.geoms if isinstance(geometry, MultiPolygon) else [geometry]
        parts = []
        for polygon in polygons:
            parts.append(self.ring(polygon.exterior.coords))
            parts.extend(self.ring(interior.coords) for interior in polygon.interiors)
        return " ".join(parts)


def _legend(scores: Mapping[str, Optional[float]], top: float, width: float) -> List[str]:
    present = [v for v in scores.values() if v is not None]
    lo, hi = (min(present), max(present)) if present else (0.0, 0.0)
    step = (width - 40.0) / (LEGEND_STEPS + 1)
    items = ['<g class="legend" font-family="sans-serif" font-size="11">']
    for i in range(LEGEND_STEPS):
        position = i / (LEGEND_STEPS - 1)
        x = 20.0 + i * step
        label = lo + position * (hi - lo)
        items.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{step:.2f}" height="14" fill="{ramp_color(position)}"/>')
        items.append(f'<text x="{x:.2f}" y="{top + 28:.2f}">{label:+.2f}</text>')
    x = 20.0 + LEGEND_STEPS * step + 10.0
    items.append(f'<rect x="{x:.2f}" y="{top:.2f}" width="{step:.2f}" height="14" fill="{NO_DATA_FILL}" '
                 f'stroke="{NO_DATA_STROKE}" stroke-dasharray="3,2"/>')
    items.append(f'<text x="{x:.2f}" y="{top + 28:.2f}">no data</text>')
    items.append("</g>")
    return items


def render_svg(values: Mapping[str, Optional[float]], areas: Sequence[AreaUnit], title: str = "") -> str:
    """
    SVG document with one path per area filled by its standardized score

    Missing values use a grey dashed no-data style.
    """
    ordered = sorted(areas, key=lambda a: a.id)
    canvas = SvgCanvas(union_bounds(a.boundary.bounds for a in ordered))
    scores = standardize({a.id: values.get(a.id) for a in ordered})
    positions = ramp_positions(scores)
    height = canvas.height + LEGEND_HEIGHT

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{canvas.width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {canvas.width:.2f} {height:.2f}">',
        f"<title>{title}</title>",
        '<g class="areas" fill-rule="evenodd">',
    ]
    for area in ordered:
        if positions[area.id] is None:
            style = f'fill="{NO_DATA_FILL}" stroke="{NO_DATA_STROKE}" stroke-dasharray="3,2" class="no-data"'
        else:
            style = f'fill="{ramp_color(positions[area.id])}" stroke="{AREA_STROKE}" stroke-width="0.5"'
        z = "" if scores[area.id] is None else f' data-z="{scores[area.id]:.4f}"'
        lines.append(f'<path id="{area.id}" d="{canvas.path(area.boundary)}" {style}{z}/>')
    lines.append("</g>")
    lines.extend(_legend(scores, canvas.height + 12.0, canvas.width))
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def export_choropleth(values: Mapping[str, Optional[float]], areas: Sequence[AreaUnit], path: Path,
                      column: str = "value") -> Tuple[Path, Path]:
    """
    Write <path>.geojson (raw and standardized values) and <path>.svg

    Args:
        values: Area id -> value; missing ids or None are no-data
        areas: Areas to draw
        path: Output path; any suffix is replaced
        column: Property name for the raw value

    Returns:
        Tuple of (geojson path, svg path)
    """
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".svg", ".geojson") else path
    base.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(areas, key=lambda a: a.id)
    scores = standardize({a.id: values.get(a.id) for a in ordered})

    features = [
        feature(area.boundary, {"area_id": area.id, column: values.get(area.id), f"{column}_z": scores[area.id]}, area.id)
        for area in ordered
    ]
    geojson_path = write_geojson(features, base.with_suffix(".geojson"))
    svg_path = base.with_suffix(".svg")
    svg_path.write_text(render_svg(values, ordered, title=column), encoding="utf-8")
    missing = sum(1 for v in scores.values() if v is None)
    if missing:
        logger.warning(f"{missing} areas have no value for {column}; drawn as no-data")
    logger.info(f"Exported choropleth of {column} to {svg_path}")
    return geojson_path, svg_path

"""
Greenery Analyzer
Metrics stage: street choice, buffers and the six per-area greenery measures
"""

from pathlib import Path
from typing import Dict, List, Mapping

import pandas as pd
from shapely import STRtree

from ...exceptions import GeometryDomainError
from ...models.geo import AreaUnit
from ...models.greenery import METRIC_COLUMNS, GreeneryVector
from ...models.network import ChoiceScores, StreetSegment
from ...storage.readers import read_areas, read_green_cover, read_images, read_parks, read_segments
from ...storage.writers import feature
from ..geometry import buffer_segments, check_same_crs, rasterize_fraction, require_projected, union_bounds
from ..greenery import (
    ImageIndex,
    area_window,
    assign_segments,
    buffers_touching,
    decompose_public_green,
    onroad_gsv_detail,
    onroad_ndvi_detail,
    public_greenery,
)
from ..network import build_graph, choice, normalize_scores
from .base_analyzer import BaseAnalyzer, StageOutput

PIXEL_COLUMNS = ("onroad_pixels", "offroad_pixels", "public_green_pixels", "area_pixels")


class GreeneryAnalyzer(BaseAnalyzer):
    """
    Computes street choice and the greenery vector of every area

    Outputs: metrics.csv, metrics.geojson, choice.csv, choice.geojson
    """

    stage = "metrics"
    parameter_keys = (
        "buffer_half_width", "snap_tolerance", "choice_radius", "choice_mode",
        "per_buffer_denominator", "gsv_aggregation", "cover_cell_size",
    )
    input_keys = ("areas", "green_cover", "parks", "segments", "images")

    def analyze(self, upstream: Mapping[str, Path]) -> StageOutput:
        inputs = self.config.inputs
        params = self.params

        self.logger.info("Step 1: Loading areas, green cover, parks, segments and images")
        areas = sorted(read_areas(inputs.areas), key=lambda a: a.id)
        bounds = union_bounds([a.boundary.bounds for a in areas])
        require_projected(bounds, "areas")
        raster = read_green_cover(inputs.green_cover, params.cover_cell_size, bounds)
        parks = read_parks(inputs.parks)
        segments = read_segments(inputs.segments)
        images = read_images(inputs.images)
        check_same_crs(raster.bounds, bounds, "green cover vs areas")
        check_same_crs(raster.bounds, union_bounds([s.geometry.bounds for s in segments]), "green cover vs segments")

        self.logger.info("Step 2: Street choice")
        graph = build_graph(segments, params.snap_tolerance)
        scores = normalize_scores(choice(graph, params.choice_radius, params.choice_mode, jobs=params.jobs))

        self.logger.info("Step 3: Buffers and public green layer")
        buffers = buffer_segments(segments, params.buffer_half_width)
        public_green = public_greenery(raster, parks)
        assignment = assign_segments(segments, areas)
        tree = STRtree([b.geometry for b in buffers])
        index = ImageIndex(images)

        self.logger.info(f"Step 4: Greenery metrics for {len(areas)} areas")
        vectors = [
            self.area_vector(area, raster, public_green, buffers, assignment[area.id], tree, index, scores)
            for area in areas
        ]

        output = StageOutput(warnings=self.warnings)
        output.tables["metrics.csv"] = metrics_frame(vectors)
        output.tables["choice.csv"] = scores.to_frame()
        output.geojson["metrics.geojson"] = metrics_features(areas, vectors)
        output.geojson["choice.geojson"] = choice_features(segments, scores)
        self.log_analysis(output)
        return output

    def area_vector(self, area: AreaUnit, raster, public_green, buffers, assigned: List[int], tree: STRtree,
                    index: ImageIndex, scores: ChoiceScores) -> GreeneryVector:
        """Greenery vector of one area"""
        params = self.params
        notes: List[str] = []
        try:
            window = area_window(area, raster)
        except GeometryDomainError as exc:
            self.warn(str(exc))
            return GreeneryVector(area_id=area.id, warnings=[str(exc)])

        total = rasterize_fraction(raster, area.boundary)
        if total.no_coverage:
            notes.append("no pixel centers inside the area")

        own = [buffers[i] for i in assigned]
        if not own:
            notes.append("no street segments")
        ndvi = onroad_ndvi_detail(area, public_green, own, scores, params.per_buffer_denominator, window=window)
        gsv = onroad_gsv_detail(area, index, own, scores, params.gsv_aggregation)
        if own and gsv.segments_used == 0:
            notes.append("no street images")
        if ndvi.fell_back:
            notes.append("all choice weights zero; plain mean used")

        parts = decompose_public_green(area, public_green, buffers_touching(area, buffers, tree), window=window)
        offroad = parts.offroad_pixels / parts.area_pixels if parts.area_pixels else 0.0

        for note in notes:
            self.warn(f"Area {area.id}: {note}")
        return GreeneryVector(
            area_id=area.id,
            g_total_ndvi=total.fraction,
            g_onroad_ndvi=ndvi.weighted or 0.0,
            g_onroad_gsv=gsv.weighted,
            g_offroad=offroad,
            g_onroad_ndvi_unweighted=ndvi.unweighted or 0.0,
            g_onroad_gsv_unweighted=gsv.unweighted,
            onroad_pixels=parts.onroad_pixels,
            offroad_pixels=parts.offroad_pixels,
            public_green_pixels=parts.public_green_pixels,
            area_pixels=parts.area_pixels,
            warnings=notes,
        )


def metrics_frame(vectors: List[GreeneryVector]) -> pd.DataFrame:
    """area_id, the six metric columns, pixel counts and a warnings column"""
    rows = []
    for vector in vectors:
        row = vector.model_dump(include={"area_id", *METRIC_COLUMNS, *PIXEL_COLUMNS})
        row["warnings"] = "; ".join(vector.warnings)
        rows.append(row)
    frame = pd.DataFrame(rows, columns=["area_id", *METRIC_COLUMNS, *PIXEL_COLUMNS, "warnings"])
    # None -> NaN so missing measures drop out of the models
    frame[list(METRIC_COLUMNS)] = frame[list(METRIC_COLUMNS)].astype(float)
    return frame


def metrics_features(areas: List[AreaUnit], vectors: List[GreeneryVector]) -> List[dict]:
    by_id: Dict[str, GreeneryVector] = {v.area_id: v for v in vectors}
    return [
        feature(area.boundary, {
            **area.to_properties(),
            **by_id[area.id].model_dump(include=set(METRIC_COLUMNS)),
        }, area.id)
        for area in areas
    ]


def choice_features(segments: List[StreetSegment], scores: ChoiceScores) -> List[dict]:
    frame = scores.to_frame().set_index("segment_id")
    return [
        feature(segment.geometry, {
            "segment_id": segment.id,
            "c_raw": float(frame.at[segment.id, "c_raw"]),
            "w": float(frame.at[segment.id, "w"]),
            "normalized_0_100": float(frame.at[segment.id, "normalized_0_100"]),
        }, segment.id)
        for segment in sorted(segments, key=lambda s: s.id)
    ]

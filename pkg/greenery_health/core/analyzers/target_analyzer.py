"""
Target Analyzer
Targets stage: walking reach of every population cell and per-area target shares
"""

from pathlib import Path
from typing import Dict, List, Mapping

import pandas as pd

from ...models.targets import TargetFlags, TargetResult
from ...storage.readers import read_areas, read_green_cover, read_parks, read_population_grid, read_segments
from ..accessibility import aggregate_targets, cell_green_areas, esa_who_target, ne_target, walking_reach, who_target
from ..geometry import require_projected, union_bounds
from ..network import build_graph
from .base_analyzer import BaseAnalyzer, StageOutput

TARGET_COLUMNS = ["area_id", "who_share", "esa_who_share", "ne_share", "population"]


class TargetAnalyzer(BaseAnalyzer):
    """
    Flags each population cell against the WHO, ESA-WHO and NE targets and
    apportions the flags to areas by population

    Outputs: targets.csv
    """

    stage = "targets"
    parameter_keys = (
        "snap_tolerance", "walk_budget_minutes", "walk_speed_kmh", "max_access_distance",
        "who_min_area", "esa_who_min_area", "ne_min_area", "grid_cell_size", "cover_cell_size",
    )
    input_keys = ("areas", "green_cover", "parks", "segments", "population_grid")

    def analyze(self, upstream: Mapping[str, Path]) -> StageOutput:
        inputs = self.config.inputs
        params = self.params

        self.logger.info("Step 1: Loading population grid, streets, parks and green cover")
        areas = sorted(read_areas(inputs.areas), key=lambda a: a.id)
        cells = read_population_grid(inputs.population_grid, params.grid_cell_size)
        segments = read_segments(inputs.segments)
        parks = [p for p in read_parks(inputs.parks) if p.is_public]
        extent = union_bounds(a.boundary.bounds for a in areas)
        require_projected(extent, "areas")
        raster = read_green_cover(inputs.green_cover, params.cover_cell_size, extent)

        self.logger.info(f"Step 2: Walking reach within {params.walk_budget_meters:.0f} m")
        graph = build_graph(segments, params.snap_tolerance)
        reaches = walking_reach(
            cells, graph, params.walk_budget_minutes, params.walk_speed_kmh, parks,
            params.max_access_distance, jobs=params.jobs,
        )
        for reach in reaches:
            if reach.warning:
                self.warnings.append(f"Cell {reach.cell_id}: {reach.warning}")

        self.logger.info("Step 3: Target flags per cell")
        green_areas = cell_green_areas(cells, raster)
        flags: Dict[str, TargetFlags] = {}
        for cell, reach in zip(cells, reaches):
            flags[cell.cell_id] = TargetFlags(
                who=who_target(cell, reach, parks, params.who_min_area),
                esa_who=esa_who_target(cell, reach, green_areas=green_areas, min_area=params.esa_who_min_area),
                ne=ne_target(cell, reach, parks, params.ne_min_area),
            )

        self.logger.info("Step 4: Population-weighted shares per area")
        results = aggregate_targets(cells, flags, areas)
        for result in results:
            if result.population == 0:
                self.warnings.append(f"Area {result.area_id}: no grid population; target shares missing")

        output = StageOutput(warnings=self.warnings)
        output.tables["targets.csv"] = targets_frame(results)
        self.log_analysis(output)
        return output


def targets_frame(results: List[TargetResult]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in results], columns=TARGET_COLUMNS)

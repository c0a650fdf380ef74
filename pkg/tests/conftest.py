from pathlib import Path
from typing import Sequence

import numpy as np
import pytest
from shapely.geometry import LineString, box

from greenery_health.models.geo import AreaKind, AreaUnit, GreenRaster
from greenery_health.models.network import StreetSegment
from greenery_health.synthetic import build_mini_city, mini_city
from greenery_health.utils import load_pipeline_config

# metrics and conditions kept small so a full run stays quick
RUN_OVERRIDES = {
    "parameters": {
        "treatment_metrics": ["g_onroad_ndvi", "g_total_ndvi"],
        "outcome_conditions": ["diabetes", "total"],
    }
}


def make_area(area_id: str, minx: float, miny: float, maxx: float, maxy: float) -> AreaUnit:
    return AreaUnit(id=area_id, kind=AreaKind.WARD, boundary=box(minx, miny, maxx, maxy))


def make_raster(cells, origin=(0.0, 0.0), cell_size: float = 1.0) -> GreenRaster:
    return GreenRaster(origin=origin, cell_size=cell_size, cells=np.asarray(cells, dtype=bool))


def make_segments(lines: Sequence[Sequence[tuple]], prefix: str = "s") -> list:
    return [StreetSegment.from_linestring(f"{prefix}{i}", LineString(coords)) for i, coords in enumerate(lines, start=1)]


def build_config(root: Path, seed: int = 1, wards_per_side: int = 6):
    config_path = build_mini_city(root, seed=seed, wards_per_side=wards_per_side, bootstrap_samples=20)
    return config_path, load_pipeline_config(config_path, RUN_OVERRIDES)


@pytest.fixture(scope="session")
def small_city():
    """4x4-ward mini-city held in memory"""
    return mini_city(seed=3, wards_per_side=4)


@pytest.fixture
def city_config(tmp_path):
    """Freshly written 6x6-ward mini-city and its loaded configuration"""
    return build_config(tmp_path / "city")


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    """A mini-city that has been run once; tests must not modify it"""
    from greenery_health.processors import PipelineRunner

    config_path, config = build_config(tmp_path_factory.mktemp("finished") / "city")
    manifest = PipelineRunner(config).run()
    return config_path, config, manifest

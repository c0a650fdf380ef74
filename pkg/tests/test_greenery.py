import math

import numpy as np
import pytest
from shapely.geometry import LineString, box

from greenery_health.core.analyzers.greenery_analyzer import GreeneryAnalyzer, metrics_frame
from greenery_health.core.geometry import buffer_polyline, buffer_segments
from greenery_health.core.greenery import (
    ImageIndex,
    aggregate_segment_scores,
    assign_segments,
    buffers_touching,
    decompose_public_green,
    offroad,
    onroad_gsv,
    onroad_ndvi,
    public_greenery,
    segment_gsv_scores,
    total_ndvi,
)
from greenery_health.core.network import build_graph, choice
from greenery_health.exceptions import GeometryDomainError
from greenery_health.models.geo import Access, GreenSpaceKind, GreenSpacePolygon
from greenery_health.models.greenery import METRIC_COLUMNS, StreetImageRecord
from greenery_health.models.network import ChoiceScores
from greenery_health.synthetic import CITY_ORIGIN, WARD_SIZE, mini_city
from tests.conftest import make_area, make_raster, make_segments


def park(park_id, geometry, access=Access.PUBLIC):
    return GreenSpacePolygon(park_id, GreenSpaceKind.PARK, access, geometry)


def weights_for(ids, weights):
    weights = np.asarray(weights, dtype=float)
    return ChoiceScores(tuple(ids), np.exp(weights), weights, 500.0)


@pytest.fixture
def banded():
    """100 m square area with a 20 m green band along y in [40, 60) and one road on y = 50"""
    cells = np.zeros((100, 100), dtype=bool)
    cells[40:60, :] = True
    raster = make_raster(cells)
    area = make_area("A", 0, 0, 100, 100)
    segment = make_segments([[(0, 50), (100, 50)]])[0]
    return area, raster, segment


class TestAggregation:
    def test_equal_weights_equal_scores(self):
        assert aggregate_segment_scores([0.02, 0.02, 0.02], [1.5, 1.5, 1.5]).weighted == pytest.approx(0.02)

    def test_zero_weight_segment_excluded(self):
        result = aggregate_segment_scores([0.2, 0.9], [2.0, 0.0])
        assert result.weighted == pytest.approx(0.2)
        assert result.unweighted == pytest.approx(0.55)

    def test_hand_computed_weighted_mean(self):
        result = aggregate_segment_scores([0.10, 0.40, 0.99], [math.log(3), math.log(9), 0.0])
        assert result.weighted == pytest.approx(0.30)

    def test_all_zero_weights_fall_back_to_mean(self):
        result = aggregate_segment_scores([0.1, 0.3], [0.0, 0.0])
        assert result.fell_back
        assert result.weighted == pytest.approx(0.2)

    def test_missing_scores_skipped(self):
        result = aggregate_segment_scores([None, 0.4, float("nan")], [5.0, 1.0, 1.0])
        assert result.segments_used == 1
        assert result.weighted == pytest.approx(0.4)

    def test_no_scores(self):
        assert aggregate_segment_scores([None], [1.0]).weighted is None


class TestNdviMetrics:
    def test_total_ndvi_all_green(self):
        assert total_ndvi(make_area("A", 0, 0, 10, 10), make_raster(np.ones((10, 10)))) == 1.0

    def test_total_ndvi_half_green(self, banded):
        area, raster, _ = banded
        half = raster.with_cells(np.repeat([[True] * 50 + [False] * 50], 100, axis=0))
        assert total_ndvi(area, raster) == pytest.approx(0.2)
        assert total_ndvi(area, half) == pytest.approx(0.5)

    def test_area_outside_raster_rejected(self):
        with pytest.raises(GeometryDomainError):
            total_ndvi(make_area("far", 500, 500, 600, 600), make_raster(np.ones((10, 10))))

    def test_public_greenery_masks(self):
        raster = make_raster(np.ones((10, 10)))
        assert public_greenery(raster, []).green_count == 0
        assert public_greenery(raster, [park("p", box(0, 0, 10, 10))]).green_count == 100
        assert public_greenery(raster, [park("p", box(0, 0, 5, 10))]).green_count == 50
        assert public_greenery(raster, [park("g", box(0, 0, 10, 10), Access.RESTRICTED)]).green_count == 0

    def test_onroad_ndvi_area_denominator(self, banded):
        area, raster, segment = banded
        public = public_greenery(raster, [park("p", box(0, 0, 100, 100))])
        buffers = [buffer_polyline(segment, 10.0)]
        scores = weights_for([segment.id], [math.log(5)])
        assert onroad_ndvi(area, public, buffers, scores) == pytest.approx(0.2)
        assert onroad_ndvi(area, public, buffers, scores, per_buffer_denominator=True) == pytest.approx(1.0)

    def test_onroad_ndvi_without_segments_is_zero(self, banded):
        area, raster, _ = banded
        assert onroad_ndvi(area, raster, [], weights_for([], [])) == 0.0

    def test_onroad_ndvi_ignores_weight_scale(self, small_city):
        area = small_city.areas[5]
        public = public_greenery(small_city.raster, small_city.parks)
        scores = choice(build_graph(small_city.segments), radius=500.0)
        buffers = buffer_segments(small_city.segments, 10.0)
        own = [buffers[i] for i in assign_segments(small_city.segments, small_city.areas)[area.id]]
        assert onroad_ndvi(area, public, own, scores.scaled(7.5)) == pytest.approx(onroad_ndvi(area, public, own, scores))

    def test_missing_weight_rejected(self, banded):
        area, raster, segment = banded
        with pytest.raises(GeometryDomainError):
            onroad_ndvi(area, raster, [buffer_polyline(segment, 10.0)], weights_for(["other"], [1.0]))


class TestImagery:
    def test_uniform_images(self):
        area = make_area("A", 0, 0, 100, 100)
        segments = make_segments([[(0, 25), (100, 25)], [(0, 75), (100, 75)]])
        images = [StreetImageRecord("i1", (50, 25), 0.25), StreetImageRecord("i2", (50, 75), 0.25)]
        buffers = buffer_segments(segments, 10.0)
        assert onroad_gsv(area, images, buffers, weights_for(["s1", "s2"], [1.0, 2.0])) == pytest.approx(0.25)

    def test_mean_and_sum_per_segment(self):
        buffers = buffer_segments(make_segments([[(0, 0), (100, 0)]]), 10.0)
        index = ImageIndex([StreetImageRecord("a", (20, 1), 0.2), StreetImageRecord("b", (70, -1), 0.4),
                            StreetImageRecord("far", (50, 40), 0.9)])
        assert segment_gsv_scores(index, buffers, "mean") == [pytest.approx(0.3)]
        assert segment_gsv_scores(index, buffers, "sum") == [pytest.approx(0.6)]

    def test_segments_without_images_left_out(self):
        area = make_area("A", 0, 0, 100, 100)
        segments = make_segments([[(0, 25), (100, 25)], [(0, 75), (100, 75)]])
        images = [StreetImageRecord("i1", (50, 25), 0.6)]
        scores = weights_for(["s1", "s2"], [1.0, 3.0])
        assert onroad_gsv(area, images, buffer_segments(segments, 10.0), scores) == pytest.approx(0.6)
        assert onroad_gsv(area, [], buffer_segments(segments, 10.0), scores) is None

    def test_unknown_aggregation_rejected(self):
        with pytest.raises(ValueError):
            segment_gsv_scores(ImageIndex([]), [], "median")


class TestOffroad:
    def test_no_buffers_gives_public_fraction(self, banded):
        area, raster, _ = banded
        public = public_greenery(raster, [park("p", box(0, 0, 100, 100))])
        assert offroad(area, public, []) == pytest.approx(0.2)

    def test_covering_buffer_gives_zero(self, banded):
        area, raster, _ = banded
        wide = buffer_polyline(LineString([(-10, 50), (110, 50)]), 200.0)
        assert offroad(area, raster, [wide]) == 0.0

    def test_band_inside_buffer_is_onroad(self, banded):
        area, raster, segment = banded
        parts = decompose_public_green(area, raster, [buffer_polyline(segment, 10.0)])
        assert (parts.onroad_pixels, parts.offroad_pixels, parts.area_pixels) == (2000, 0, 10000)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(50))
    def test_decomposition_on_city_variants(self, seed):
        city = mini_city(seed=seed, wards_per_side=3)
        public = public_greenery(city.raster, city.parks)
        buffers = buffer_segments(city.segments, 10.0)
        for area in city.areas:
            parts = decompose_public_green(area, public, buffers_touching(area, buffers))
            assert parts.onroad_pixels + parts.offroad_pixels == parts.public_green_pixels

    def test_decomposition_against_generator_masks(self, small_city):
        city = small_city
        height = city.raster.height
        park_mask = np.zeros_like(city.raster.cells)
        for p in city.parks:
            if p.is_public:
                x1, y1, x2, y2 = (int(round(v - o)) for v, o in zip(p.boundary.bounds, city.raster.origin * 2))
                park_mask[height - y2:height - y1, x1:x2] = True
        public = public_greenery(city.raster, city.parks)
        buffers = buffer_segments(city.segments, 10.0)
        size = int(WARD_SIZE)
        for area in city.areas:
            col = int(round(area.boundary.bounds[0] - city.raster.origin[0])) // size
            row = int(round(area.boundary.bounds[1] - city.raster.origin[1])) // size
            rows = slice(height - (row + 1) * size, height - row * size)
            cols = slice(col * size, (col + 1) * size)
            expected = int((city.raster.cells[rows, cols] & park_mask[rows, cols]).sum())

            parts = decompose_public_green(area, public, buffers_touching(area, buffers))
            assert parts.public_green_pixels == expected
            assert parts.onroad_pixels + parts.offroad_pixels == expected
            assert parts.area_pixels == size * size
            assert total_ndvi(area, city.raster) == pytest.approx(city.raster.cells[rows, cols].mean())


class TestAssignment:
    def test_midpoints_pick_areas(self):
        areas = [make_area("B", 100, 0, 200, 100), make_area("A", 0, 0, 100, 100)]
        segments = make_segments([[(10, 50), (60, 50)], [(120, 50), (180, 50)], [(50, 50), (150, 50)],
                                  [(500, 0), (600, 0)]])
        assignment = assign_segments(segments, areas)
        # s3's midpoint sits on the shared border and goes to the first id
        assert assignment == {"A": [0, 2], "B": [1]}

    def test_buffers_touching_in_input_order(self):
        area = make_area("A", 0, 0, 100, 100)
        buffers = buffer_segments(make_segments([[(50, 95), (50, 150)], [(300, 0), (400, 0)], [(0, 50), (100, 50)]]), 10.0)
        assert [b.source_segment_id for b in buffers_touching(area, buffers)] == ["s1", "s3"]


class TestAreaVector:
    def test_area_off_the_raster_has_no_metrics(self, city_config):
        _, config = city_config
        analyzer = GreeneryAnalyzer(config)
        raster = make_raster(np.ones((10, 10)), origin=CITY_ORIGIN)
        x0, y0 = CITY_ORIGIN
        far = make_area("E09000099", x0 + 5000, y0 + 5000, x0 + 5100, y0 + 5100)

        vector = analyzer.area_vector(far, raster, None, [], [], None, None, None)
        assert vector.g_total_ndvi is None
        assert vector.g_onroad_ndvi is None
        assert vector.g_offroad is None
        assert "outside the raster" in vector.warnings[0]

        frame = metrics_frame([vector])
        assert frame[list(METRIC_COLUMNS)].isna().all(axis=None)

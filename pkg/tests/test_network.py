import math
from fractions import Fraction
from itertools import combinations

import networkx as nx
import numpy as np
import pytest
from shapely.geometry import LineString

from greenery_health.core.network import build_graph, choice, log_weights, normalize_scores
from greenery_health.exceptions import GeometryDomainError
from greenery_health.models.network import ChoiceMode, ChoiceScores, StreetGraph, StreetSegment
from tests.conftest import make_segments


def chain(n: int, length: float = 100.0) -> StreetGraph:
    """n collinear segments of equal length, end to end"""
    return build_graph(make_segments([[(i * length, 0), ((i + 1) * length, 0)] for i in range(n)]))


def grid_dual(side: int, length: float = 100.0) -> StreetGraph:
    """Street grid of side x side blocks split at every crossing"""
    lines = []
    for a in range(side + 1):
        for b in range(side):
            lines.append([(a * length, b * length), (a * length, (b + 1) * length)])
            lines.append([(b * length, a * length), ((b + 1) * length, a * length)])
    return build_graph(make_segments(lines))


def random_street_graph(n: int, edges: int, seed: int) -> StreetGraph:
    """Dual graph with random topology and random positive turn costs"""
    rng = np.random.default_rng(seed)
    graph = nx.gnm_random_graph(n, edges, seed=seed)
    for u, v in graph.edges:
        graph.edges[u, v]["turn"] = float(rng.integers(1, 5) * 45)
        graph.edges[u, v]["metric"] = 100.0
    segments = tuple(
        StreetSegment.from_linestring(f"r{i:03d}", LineString([(i * 1000.0, 0), (i * 1000.0 + 10, 0)]))
        for i in range(n)
    )
    return StreetGraph(segments=segments, graph=graph)


def brute_force_choice(graph: nx.Graph, weight=None) -> list:
    """Sum over unordered pairs of the share of shortest paths through each interior node"""
    totals = [Fraction(0)] * graph.number_of_nodes()
    for s, t in combinations(sorted(graph.nodes), 2):
        if not nx.has_path(graph, s, t):
            continue
        paths = list(nx.all_shortest_paths(graph, s, t, weight=weight))
        for path in paths:
            for node in path[1:-1]:
                totals[node] += Fraction(1, len(paths))
    return totals


class TestBuildGraph:
    def test_shared_endpoint_links_once(self):
        graph = build_graph(make_segments([[(0, 0), (10, 0)], [(10, 0), (20, 5)]]))
        assert graph.graph.number_of_edges() == 1

    def test_parallel_segments_not_linked(self):
        graph = build_graph(make_segments([[(0, 0), (100, 0)], [(0, 50), (100, 50)]]), snap_tolerance=0.5)
        assert graph.graph.number_of_edges() == 0

    def test_t_junction_links_all_pairs(self):
        graph = build_graph(make_segments([[(-50, 0), (0, 0)], [(0, 0), (50, 0)], [(0, 0), (0, 50)]]))
        assert graph.graph.number_of_edges() == 3

    def test_turn_angles_at_crossing(self):
        graph = build_graph(make_segments([
            [(0, 0), (100, 0)], [(0, 0), (-100, 0)], [(0, 0), (0, 100)],
        ]))
        turns = {(a, b): turn for a, b, turn in graph.links()}
        assert turns[("s1", "s2")] == pytest.approx(0.0)
        assert turns[("s1", "s3")] == pytest.approx(90.0)

    def test_snap_tolerance(self):
        lines = [[(0, 0), (10, 0)], [(10.05, 0), (20, 0)]]
        assert build_graph(make_segments(lines), snap_tolerance=0.1).graph.number_of_edges() == 1
        assert build_graph(make_segments(lines), snap_tolerance=0.01).graph.number_of_edges() == 0

    def test_metric_is_midpoint_distance(self):
        graph = build_graph(make_segments([[(0, 0), (100, 0)], [(100, 0), (300, 0)]]))
        assert graph.graph.edges[0, 1]["metric"] == pytest.approx(150.0)

    def test_rejects_duplicate_ids(self):
        segment = make_segments([[(0, 0), (1, 0)]])[0]
        with pytest.raises(GeometryDomainError):
            build_graph([segment, segment])

    def test_rejects_empty_input(self):
        with pytest.raises(GeometryDomainError):
            build_graph([])


class TestChoice:
    def test_triangle_has_no_through_movement(self):
        graph = build_graph(make_segments([[(0, 0), (10, 0)], [(10, 0), (5, 8)], [(5, 8), (0, 0)]]))
        scores = choice(graph, radius=math.inf)
        assert scores.raw.tolist() == [0.0, 0.0, 0.0]

    def test_three_segment_path(self):
        scores = choice(chain(3), radius=math.inf, mode=ChoiceMode.TOPOLOGICAL)
        assert scores.raw.tolist() == [0.0, 1.0, 0.0]
        assert scores.weights.tolist() == [0.0, 0.0, 0.0]

    def test_five_segment_path_weights(self):
        scores = choice(chain(5), radius=math.inf, mode=ChoiceMode.TOPOLOGICAL)
        assert scores.raw.tolist() == [0.0, 3.0, 4.0, 3.0, 0.0]
        assert scores.weights == pytest.approx([0.0, math.log(3), math.log(4), math.log(3), 0.0])

    def test_radius_limits_pairs(self):
        # midpoints are 100 m apart: within 250 m each source sees two neighbours per side
        scores = choice(chain(5), radius=250.0, mode=ChoiceMode.TOPOLOGICAL)
        assert scores.raw.tolist() == [0.0, 1.0, 1.0, 1.0, 0.0]
        assert choice(chain(5), radius=150.0, mode=ChoiceMode.TOPOLOGICAL).raw.tolist() == [0.0] * 5

    def test_large_radius_equals_global(self):
        graph = grid_dual(3)
        local = choice(graph, radius=1e6, mode=ChoiceMode.ANGULAR)
        assert local.raw == pytest.approx(choice(graph, radius=math.inf, mode=ChoiceMode.ANGULAR).raw)

    def test_grid_matches_path_enumeration(self):
        graph = grid_dual(2)
        scores = choice(graph, radius=math.inf, mode=ChoiceMode.TOPOLOGICAL, exact=True)
        assert list(scores.raw) == brute_force_choice(graph.graph)

    @pytest.mark.parametrize("seed", range(200))
    def test_random_graphs_match_path_enumeration(self, seed):
        n = 6 + seed % 50
        graph = random_street_graph(n, min(n * (n - 1) // 2, n + seed % n), seed)
        scores = choice(graph, radius=math.inf, mode=ChoiceMode.TOPOLOGICAL, exact=True)
        assert list(scores.raw) == brute_force_choice(graph.graph)

    @pytest.mark.parametrize("seed", [7, 8])
    def test_random_angular_graphs_match_networkx(self, seed):
        graph = random_street_graph(20, 35, seed)
        scores = choice(graph, radius=math.inf, mode=ChoiceMode.ANGULAR)
        oracle = nx.betweenness_centrality(graph.graph, normalized=False, weight="turn")
        assert scores.raw == pytest.approx([oracle[i] for i in range(len(graph))])

    def test_chunking_does_not_change_scores(self):
        graph = grid_dual(3)
        whole = choice(graph, radius=500.0)
        assert choice(graph, radius=500.0, chunk_size=3).raw == pytest.approx(whole.raw, rel=1e-12, abs=1e-12)
        assert choice(graph, radius=500.0, chunk_size=5, jobs=2).raw == pytest.approx(whole.raw, rel=1e-12, abs=1e-12)

    def test_exact_mode_agrees_with_floats(self):
        graph = grid_dual(2)
        exact = choice(graph, radius=math.inf, exact=True)
        assert [float(v) for v in exact.raw] == pytest.approx(choice(graph, radius=math.inf).raw.tolist())

    def test_radius_must_be_positive(self):
        with pytest.raises(GeometryDomainError):
            choice(chain(2), radius=0.0)

    def test_t_junction_has_no_through_movement(self):
        # reaching the south arm by turning onto the north arm and doubling back is not a path
        graph = build_graph(make_segments([[(0, 0), (100, 0)], [(100, 0), (100, 100)], [(100, 0), (100, -100)]]))
        assert choice(graph, radius=math.inf).raw.tolist() == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("radius", [250.0, 450.0, math.inf])
    def test_grid_matches_turn_aware_enumeration(self, radius):
        graph = grid_dual(3)
        scores = choice(graph, radius=radius, mode=ChoiceMode.ANGULAR, exact=True)
        assert list(scores.raw) == turn_aware_choice(graph, radius)


def diamond_with_detour() -> StreetGraph:
    """j - i - k along a straight street, j and k also joined by a long loop x"""
    return build_graph(make_segments([
        [(0, 0), (100, 0)],
        [(100, 0), (200, 0)],
        [(200, 0), (300, 0)],
        [(0, 0), (0, 1000), (300, 1000), (300, 0)],
    ]))


class TestChoiceInvariants:
    def test_paths_may_leave_the_radius(self):
        graph = diamond_with_detour()
        local = choice(graph, radius=250.0, mode=ChoiceMode.TOPOLOGICAL)
        # the loop is beyond 250 m but still ties with the straight route from j to k
        assert local.raw[1] == pytest.approx(0.5)
        assert choice(graph, radius=math.inf, mode=ChoiceMode.TOPOLOGICAL).raw[1] == pytest.approx(0.5)

    @pytest.mark.parametrize("mode", [ChoiceMode.ANGULAR, ChoiceMode.TOPOLOGICAL])
    def test_choice_grows_with_radius(self, mode):
        for graph in (grid_dual(3), diamond_with_detour()):
            previous = np.zeros(len(graph))
            for radius in (120.0, 250.0, 400.0, 800.0, math.inf):
                raw = choice(graph, radius=radius, mode=mode).raw
                assert np.all(raw >= previous - 1e-9)
                previous = raw

    def test_segment_order_does_not_matter(self):
        base = grid_dual(3)
        order = np.random.default_rng(11).permutation(len(base))
        shuffled = build_graph([base.segments[i] for i in order])
        for mode in ChoiceMode:
            expected = choice(base, radius=400.0, mode=mode).raw_map()
            actual = choice(shuffled, radius=400.0, mode=mode).raw_map()
            assert [actual[k] for k in sorted(expected)] == pytest.approx([expected[k] for k in sorted(expected)])

    def test_isolated_segments_score_zero(self):
        lines = [[(i * 100.0, 0), ((i + 1) * 100.0, 0)] for i in range(4)]
        lines += [[(5000, 5000), (5100, 5000)], [(9000, 0), (9000, 80)]]
        scores = choice(build_graph(make_segments(lines)), radius=math.inf)
        assert scores.raw.tolist()[4:] == [0.0, 0.0]
        assert scores.weights.tolist()[4:] == [0.0, 0.0]
        assert scores.raw.tolist()[:4] == pytest.approx([0.0, 2.0, 2.0, 0.0])


def turn_aware_choice(graph: StreetGraph, radius: float) -> list:
    """
    Choice by enumerating shortest paths over (segment, exit end) states

    A path enters a segment at one end and leaves by the other; only pairs
    whose midpoints are within `radius` along the network are counted.
    """
    states = nx.DiGraph()
    for u, v, data in graph.graph.edges(data=True):
        lo, hi = min(u, v), max(u, v)
        for end_lo, end_hi, turn in data["junctions"]:
            states.add_edge(("seg", lo, end_lo), ("seg", hi, 1 - end_hi), weight=turn)
            states.add_edge(("seg", hi, end_hi), ("seg", lo, 1 - end_lo), weight=turn)
    metric = dict(nx.all_pairs_dijkstra_path_length(graph.graph, weight="metric"))

    totals = [Fraction(0)] * len(graph)
    for s, t in combinations(range(len(graph)), 2):
        if t not in metric[s] or metric[s][t] > radius:
            continue
        search = states.copy()
        for end in (0, 1):
            search.add_edge("from", ("seg", s, end), weight=0.0)
            search.add_edge(("seg", t, end), "to", weight=0.0)
        paths = list(nx.all_shortest_paths(search, "from", "to", weight="weight"))
        for path in paths:
            for segment in {state[1] for state in path[2:-2]} - {s, t}:
                totals[segment] += Fraction(1, len(paths))
    return totals


class TestWeights:
    def test_log_floor(self):
        assert log_weights([0.0, 1.0, math.e, 0.5]).tolist() == pytest.approx([0.0, 0.0, 1.0, 0.0])

    def test_normalized_affine_map(self):
        scores = ChoiceScores(("a", "b", "c"), np.array([1.0, 2.0, 8.0]), np.array([0.0, math.log(2), math.log(8)]), 500.0)
        assert normalize_scores(scores).normalized == pytest.approx([0.0, 33.33, 100.0], abs=0.01)

    def test_normalized_all_zero(self):
        scores = ChoiceScores(("a", "b", "c"), np.zeros(3), np.zeros(3), 500.0)
        assert normalize_scores(scores).normalized.tolist() == [0.0, 0.0, 0.0]

    def test_normalized_single_segment(self):
        scores = ChoiceScores(("a",), np.array([4.0]), np.array([math.log(4)]), 500.0)
        assert normalize_scores(scores).normalized.tolist() == [0.0]

    def test_frame_columns(self):
        frame = normalize_scores(choice(chain(3), radius=math.inf)).to_frame()
        assert list(frame.columns) == ["segment_id", "c_raw", "w", "normalized_0_100"]
        assert frame["segment_id"].tolist() == ["s1", "s2", "s3"]

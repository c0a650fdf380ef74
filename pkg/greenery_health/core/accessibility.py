"""
Accessibility Targets
Walking reach over the street network and WHO / ESA-WHO / NE target compliance
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from heapq import heappop, heappush
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.sparse import coo_matrix
from scipy.spatial import cKDTree
from shapely import STRtree
from shapely.geometry import Point
from shapely.ops import nearest_points

from ..exceptions import GeometryDomainError
from ..models.geo import AreaUnit, GreenRaster, GreenSpacePolygon
from ..models.network import StreetGraph
from ..models.targets import PopulationCell, ReachSet, TargetFlags, TargetResult
from ..utils.timing import time_logger
from .geometry import rasterize_fraction

logger = logging.getLogger(__name__)

WHO_MIN_AREA = 5000.0
NE_MIN_AREA = 20000.0
MAX_ACCESS_DISTANCE = 200.0


def walking_budget_meters(budget_minutes: float, speed_kmh: float) -> float:
    """Distance covered in the budget; 5 min at 4.8 km/h is 400 m"""
    if budget_minutes <= 0 or speed_kmh <= 0:
        raise GeometryDomainError("walking budget and speed must be positive")
    return speed_kmh * 1000.0 / 60.0 * budget_minutes


class Anchor:
    """A point attached to a street segment by a straight access leg"""
    __slots__ = ("segment", "offset", "leg")

    def __init__(self, segment: int, offset: float, leg: float):
        self.segment = segment
        self.offset = offset
        self.leg = leg


class WalkingNetwork:
    """
    Primal walking graph of a street network

    Junction nodes are segment endpoints merged within the snap tolerance;
    every segment is an edge of its own length. Cells and green polygons are
    attached to segments with straight access legs of at most
    `max_access_distance` meters.
    """

    def __init__(self, graph: StreetGraph, cells: Sequence[PopulationCell],
                 parks: Sequence[GreenSpacePolygon] = (), max_access_distance: float = MAX_ACCESS_DISTANCE):
        self.segments = graph.segments
        self.max_access_distance = max_access_distance
        self.lengths = [s.length for s in self.segments]
        self.ends = self._junctions(graph)
        self.incident: List[List[int]] = [[] for _ in range(self.node_count)]
        for index, (a, b) in enumerate(self.ends):
            self.incident[a].append(index)
            if b != a:
                self.incident[b].append(index)

        self.cell_ids = [c.cell_id for c in cells]
        self.tree = STRtree([s.geometry for s in self.segments])
        self.cell_anchor: List[Optional[Anchor]] = [self._snap(Point(c.centroid)) for c in cells]
        self.cells_on_segment: Dict[int, List[int]] = {}
        for ci, anchor in enumerate(self.cell_anchor):
            if anchor is not None:
                self.cells_on_segment.setdefault(anchor.segment, []).append(ci)

        self.park_ids = [p.id for p in parks]
        self.parks_on_segment: Dict[int, List[Tuple[int, Anchor]]] = {}
        for pi, park in enumerate(parks):
            for anchor in self._park_anchors(park):
                self.parks_on_segment.setdefault(anchor.segment, []).append((pi, anchor))
        # parks whose interior holds a cell centroid are reached at distance 0
        self.parks_containing_cell: List[List[int]] = [[] for _ in cells]
        if parks:
            park_tree = STRtree([p.boundary for p in parks])
            for ci, cell in enumerate(cells):
                hits = park_tree.query(Point(cell.centroid), predicate="intersects")
                self.parks_containing_cell[ci] = sorted(int(h) for h in hits)

    def _junctions(self, graph: StreetGraph) -> List[Tuple[int, int]]:
        points = np.array([pt for s in self.segments for pt in s.endpoints], dtype=float)
        pairs = cKDTree(points).query_pairs(r=graph.snap_tolerance, output_type="ndarray")
        n = len(points)
        if len(pairs):
            matrix = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
            self.node_count, labels = connected_components(matrix, directed=False)
        else:
            self.node_count, labels = n, np.arange(n)
        return [(int(labels[2 * i]), int(labels[2 * i + 1])) for i in range(len(self.segments))]

    def _snap(self, point: Point) -> Optional[Anchor]:
        hits, distances = self.tree.query_nearest(point, max_distance=self.max_access_distance, return_distance=True)
        if len(hits) == 0:
            return None
        segment = int(min(hits))
        line = self.segments[segment].geometry
        return Anchor(segment, float(line.project(point)), float(distances[0]))

    def _park_anchors(self, park: GreenSpacePolygon) -> List[Anchor]:
        anchors = []
        hits = self.tree.query(park.boundary, predicate="dwithin", distance=self.max_access_distance)
        for segment in sorted(int(h) for h in hits):
            line = self.segments[segment].geometry
            on_line, on_park = nearest_points(line, park.boundary)
            anchors.append(Anchor(segment, float(line.project(on_line)), float(on_line.distance(on_park))))
        return anchors

    def _node_distances(self, anchor: Anchor, budget: float) -> Dict[int, float]:
        a, b = self.ends[anchor.segment]
        length = self.lengths[anchor.segment]
        dist: Dict[int, float] = {}
        heap: List[Tuple[float, int]] = []
        for node, d in ((a, anchor.leg + anchor.offset), (b, anchor.leg + length - anchor.offset)):
            if d <= budget and d < dist.get(node, math.inf):
                dist[node] = d
                heappush(heap, (d, node))
        done = set()
        while heap:
            d, v = heappop(heap)
            if v in done:
                continue
            done.add(v)
            for segment in self.incident[v]:
                a, b = self.ends[segment]
                w = b if v == a else a
                nd = d + self.lengths[segment]
                if nd <= budget and nd < dist.get(w, math.inf):
                    dist[w] = nd
                    heappush(heap, (nd, w))
        return dist

    def _to_anchor(self, source: Anchor, nodes: Dict[int, float], target: Anchor) -> float:
        a, b = self.ends[target.segment]
        best = min(
            nodes.get(a, math.inf) + target.offset,
            nodes.get(b, math.inf) + self.lengths[target.segment] - target.offset,
        )
        if source.segment == target.segment:
            best = min(best, source.leg + abs(source.offset - target.offset))
        return best + target.leg

    def reach(self, cell_index: int, budget: float) -> ReachSet:
        cell_id = self.cell_ids[cell_index]
        parks = {self.park_ids[p] for p in self.parks_containing_cell[cell_index]}
        source = self.cell_anchor[cell_index]
        if source is None:
            return ReachSet(
                cell_id, frozenset([cell_id]), frozenset(parks),
                warning=f"cell {cell_id} is farther than {self.max_access_distance:g} m from every street",
            )

        nodes = self._node_distances(source, budget)
        touched = {source.segment}
        for node in nodes:
            touched.update(self.incident[node])

        cells = {cell_id}
        for segment in sorted(touched):
            for ci in self.cells_on_segment.get(segment, ()):
                if self._to_anchor(source, nodes, self.cell_anchor[ci]) <= budget:
                    cells.add(self.cell_ids[ci])
            for pi, anchor in self.parks_on_segment.get(segment, ()):
                if self._to_anchor(source, nodes, anchor) <= budget:
                    parks.add(self.park_ids[pi])
        return ReachSet(cell_id, frozenset(cells), frozenset(parks))


_NETWORK: Dict[str, object] = {}


def _init_worker(network: WalkingNetwork, budget: float):
    _NETWORK.update(network=network, budget=budget)


def _reach_chunk(indices: Sequence[int]) -> List[ReachSet]:
    network: WalkingNetwork = _NETWORK["network"]
    return [network.reach(i, _NETWORK["budget"]) for i in indices]


@time_logger
def walking_reach(cells: Sequence[PopulationCell], graph: StreetGraph, budget: float = 5.0, speed: float = 4.8,
                  parks: Sequence[GreenSpacePolygon] = (), max_access_distance: float = MAX_ACCESS_DISTANCE,
                  jobs: int = 1, chunk_size: int = 1024) -> List[ReachSet]:
    """
    Cells and green polygons within a walking budget of each cell

    Distances run from the cell centroid along a straight leg to the nearest
    street point, along the network, then out along the target's own leg.

    Args:
        cells: Population grid
        graph: Street graph (segments and snap tolerance are used)
        budget: Minutes
        speed: km/h
        parks: Public green polygons to test for reachability
        max_access_distance: Longest straight access leg in meters
        jobs: Worker processes

    Returns:
        One ReachSet per cell, in input order
    """
    budget_m = walking_budget_meters(budget, speed)
    network = WalkingNetwork(graph, cells, parks, max_access_distance)
    chunks = [list(range(s, min(s + chunk_size, len(cells)))) for s in range(0, len(cells), chunk_size)]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(network, budget_m)) as executor:
            reaches = [r for part in executor.map(_reach_chunk, chunks) for r in part]
    else:
        reaches = [network.reach(i, budget_m) for i in range(len(cells))]

    stranded = [r for r in reaches if r.warning]
    if stranded:
        logger.warning(f"{len(stranded)} cells are beyond {max_access_distance:g} m of the street network")
    logger.info(f"Computed walking reach for {len(cells)} cells within {budget_m:.0f} m")
    return reaches


def _largest_reachable(reach: ReachSet, parks: Sequence[GreenSpacePolygon]) -> float:
    areas = [p.area for p in parks if p.is_public and p.id in reach.reachable_green_polygons]
    return max(areas, default=0.0)


def who_target(cell: PopulationCell, reach: ReachSet, parks: Sequence[GreenSpacePolygon],
               min_area: float = WHO_MIN_AREA) -> bool:
    """Some single reachable public polygon covers at least 0.5 ha"""
    return _largest_reachable(reach, parks) >= min_area


def ne_target(cell: PopulationCell, reach: ReachSet, parks: Sequence[GreenSpacePolygon],
              min_area: float = NE_MIN_AREA) -> bool:
    """Some single reachable public polygon covers at least 2 ha"""
    return _largest_reachable(reach, parks) >= min_area


def cell_green_areas(cells: Sequence[PopulationCell], raster: GreenRaster) -> Dict[str, float]:
    """Green cover in square meters inside each cell; cells off the raster count as 0"""
    areas: Dict[str, float] = {}
    uncovered = 0
    for cell in cells:
        zonal = rasterize_fraction(raster, cell.cell_polygon)
        uncovered += zonal.no_coverage
        areas[cell.cell_id] = zonal.green_pixels * raster.pixel_area
    if uncovered:
        logger.warning(f"{uncovered} of {len(areas)} population cells cover no green raster pixels")
    return areas


def esa_who_target(cell: PopulationCell, reach: ReachSet, raster: Optional[GreenRaster] = None,
                   cells: Optional[Mapping[str, PopulationCell]] = None,
                   green_areas: Optional[Mapping[str, float]] = None,
                   min_area: float = WHO_MIN_AREA) -> bool:
    """
    Cumulative green cover over all reachable cells reaches 0.5 ha

    Pass `green_areas` (from cell_green_areas) to avoid recounting pixels;
    otherwise `raster` and a `cells` lookup covering the reach set are needed.
    """
    if green_areas is None:
        if raster is None or cells is None:
            raise ValueError("esa_who_target needs either green_areas or raster and cells")
        green_areas = cell_green_areas([cells[c] for c in sorted(reach.reachable_cells)], raster)
    total = sum(green_areas.get(c, 0.0) for c in sorted(reach.reachable_cells))
    return total >= min_area


def aggregate_targets(cells: Sequence[PopulationCell], flags: Mapping[str, TargetFlags],
                      areas: Sequence[AreaUnit]) -> List[TargetResult]:
    """
    Population-weighted target shares per area

    Each cell's population is split across areas in proportion to the
    intersected area; cells are reduced in cell-id order.
    """
    tree = STRtree([a.boundary for a in areas])
    weight = np.zeros(len(areas))
    who = np.zeros(len(areas))
    esa = np.zeros(len(areas))
    ne = np.zeros(len(areas))
    for cell in sorted(cells, key=lambda c: c.cell_id):
        flag = flags[cell.cell_id]
        cell_area = cell.cell_polygon.area
        if cell.population == 0 or cell_area <= 0:
            continue
        for index in sorted(int(h) for h in tree.query(cell.cell_polygon, predicate="intersects")):
            share = cell.cell_polygon.intersection(areas[index].boundary).area / cell_area
            if share <= 0:
                continue
            pop = cell.population * share
            weight[index] += pop
            who[index] += pop * flag.who
            esa[index] += pop * flag.esa_who
            ne[index] += pop * flag.ne

    results = []
    for index, area in enumerate(areas):
        if weight[index] > 0:
            w = weight[index]
            results.append(TargetResult(
                area_id=area.id,
                who_share=min(who[index] / w, 1.0),
                esa_who_share=min(esa[index] / w, 1.0),
                ne_share=min(ne[index] / w, 1.0),
                population=float(w),
            ))
        else:
            logger.warning(f"Area {area.id} received no grid population; target shares missing")
            results.append(TargetResult(area_id=area.id, population=0.0))
    return results

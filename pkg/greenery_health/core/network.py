"""
Street Network Centrality
Segment-dual graph construction and radius-restricted choice (betweenness)
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from heapq import heappop, heappush
from typing import Dict, List, Optional, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from scipy.spatial import cKDTree

from ..exceptions import GeometryDomainError
from ..models.network import ChoiceMode, ChoiceScores, StreetGraph, StreetSegment
from ..utils.timing import time_logger

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9
DEFAULT_CHUNK_SIZE = 2048

Adjacency = List[List[Tuple[int, float, float]]]


def _turn_angle(bearing_a: float, bearing_b: float) -> float:
    """Deflection between two outward bearings at a shared junction, 0 = straight on"""
    between = abs(bearing_a - bearing_b) % 360.0
    if between > 180.0:
        between = 360.0 - between
    return 180.0 - between


def build_graph(segments: Sequence[StreetSegment], snap_tolerance: float = 0.1) -> StreetGraph:
    """
    Build the segment-dual graph

    Two segments are linked when any pair of their endpoints lies within
    `snap_tolerance`. Each link stores `junctions`, one (end of the lower
    index, end of the higher index, turn) triple per touching endpoint pair,
    `turn` as the smallest of those angles, and the midpoint-to-midpoint
    metric distance.

    Args:
        segments: Street segments, ids unique
        snap_tolerance: Endpoint matching distance in meters

    Returns:
        StreetGraph over segment indices

    Raises:
        GeometryDomainError: No segments, duplicate ids or negative tolerance
    """
    if not segments:
        raise GeometryDomainError("build_graph needs at least one segment")
    if snap_tolerance < 0:
        raise GeometryDomainError(f"snap_tolerance must be >= 0, got {snap_tolerance}")
    ids = [s.id for s in segments]
    if len(set(ids)) != len(ids):
        raise GeometryDomainError("segment ids must be unique")

    # endpoint 2i is the start of segment i, 2i+1 its end
    points = np.array([pt for s in segments for pt in s.endpoints], dtype=float)
    tree = cKDTree(points)
    pairs = tree.query_pairs(r=snap_tolerance, output_type="ndarray")
    if len(pairs):
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]

    # (lo, hi) -> {(end of lo, end of hi): turn}
    links: Dict[Tuple[int, int], Dict[Tuple[int, int], float]] = {}
    for p, q in pairs:
        i, j = int(p) // 2, int(q) // 2
        if i == j:
            continue
        if i > j:
            i, j, p, q = j, i, q, p
        turn = _turn_angle(
            segments[i].outward_bearing(at_end=bool(p % 2)),
            segments[j].outward_bearing(at_end=bool(q % 2)),
        )
        links.setdefault((i, j), {})[(int(p) % 2, int(q) % 2)] = turn

    graph = nx.Graph()
    graph.add_nodes_from(range(len(segments)))
    for (i, j), ends in sorted(links.items()):
        junctions = tuple((end_i, end_j, turn) for (end_i, end_j), turn in sorted(ends.items()))
        graph.add_edge(i, j, turn=min(t for _, _, t in junctions), junctions=junctions,
                       metric=(segments[i].length + segments[j].length) / 2.0)

    isolated = sum(1 for _ in nx.isolates(graph))
    logger.info(f"Built segment graph: {len(segments)} segments, {graph.number_of_edges()} links, {isolated} isolated")
    return StreetGraph(segments=tuple(segments), graph=graph, snap_tolerance=snap_tolerance)


def _within_radius(adjacency: Adjacency, source: int, radius: float) -> Optional[Set[int]]:
    """Segments whose midpoint is within `radius` meters of the source midpoint; None = unbounded"""
    if math.isinf(radius):
        return None
    dist = {source: 0.0}
    done: Set[int] = set()
    heap = [(0.0, source)]
    while heap:
        d, v = heappop(heap)
        if v in done:
            continue
        done.add(v)
        for w, metric, _ in adjacency[v]:
            nd = d + metric
            if nd <= radius and nd < dist.get(w, math.inf):
                dist[w] = nd
                heappush(heap, (nd, w))
    return done


@dataclass(frozen=True)
class SearchSpace:
    """
    States the shortest-path search runs over

    Angular search on a graph built from geometry is end-aware: state 2i + e
    means "on segment i, leaving through end e", so a path has to run along
    a segment before it can turn off at the far junction. Otherwise each
    segment is one state.
    """
    metric: Adjacency
    moves: List[List[Tuple[int, float]]]
    owner: Tuple[int, ...]
    starts: Tuple[Tuple[int, ...], ...]

    @classmethod
    def build(cls, graph: StreetGraph, mode: ChoiceMode) -> "SearchSpace":
        metric = graph.adjacency_lists()
        n = len(metric)
        edges = list(graph.graph.edges(data=True))
        end_aware = mode == ChoiceMode.ANGULAR and all("junctions" in data for _, _, data in edges)
        if not end_aware:
            topological = mode == ChoiceMode.TOPOLOGICAL
            moves = [[(w, 1 if topological else turn) for w, _, turn in row] for row in metric]
            return cls(metric, moves, tuple(range(n)), tuple((i,) for i in range(n)))

        moves = [[] for _ in range(2 * n)]
        for u, v, data in edges:
            lo, hi = min(u, v), max(u, v)
            for end_lo, end_hi, turn in data["junctions"]:
                # through the shared junction onto the other segment, leaving by its far end
                moves[2 * lo + end_lo].append((2 * hi + 1 - end_hi, turn))
                moves[2 * hi + end_hi].append((2 * lo + 1 - end_lo, turn))
        for row in moves:
            row.sort()
        return cls(metric, moves, tuple(s // 2 for s in range(2 * n)), tuple((2 * i, 2 * i + 1) for i in range(n)))


def _settle(space: SearchSpace, source: int, targets: Optional[Set[int]]) -> Dict[int, float]:
    """
    Shortest-path costs from the source's states, in settle order

    The search runs over the whole graph so that paths may leave the radius;
    it stops once every target has a settled state and the cost front has
    moved past the last of them.
    """
    starts = space.starts[source]
    best: Dict[int, float] = dict.fromkeys(starts, 0)
    heap = [(0, s) for s in starts]
    pending = None if targets is None else set(targets)
    limit = math.inf
    dist: Dict[int, float] = {}
    while heap:
        d, u = heappop(heap)
        if u in dist:
            continue
        if d > limit + TIE_TOLERANCE:
            break
        dist[u] = d
        if pending:
            pending.discard(space.owner[u])
            if not pending:
                limit = d
        for v, cost in space.moves[u]:
            nd = d + cost
            if v not in dist and nd < best.get(v, math.inf):
                best[v] = nd
                heappush(heap, (nd, v))
    return dist


def _source_dependencies(space: SearchSpace, source: int, targets: Optional[Set[int]],
                         exact: bool) -> Dict[int, object]:
    """
    Brandes dependency of `source` on every other segment

    Paths are counted on the shortest-path DAG: a move is on it when its
    cost closes the gap between the two settled costs within TIE_TOLERANCE.
    States are processed in topological order of that DAG, so zero-cost
    moves between equally distant states are counted whatever order the
    heap settled them in. Only pairs whose destination is in `targets`
    (every segment when None) add dependency.
    """
    if targets is not None and not targets:
        return {}
    dist = _settle(space, source, targets)
    owner = space.owner
    starts = set(space.starts[source])

    succ: Dict[int, List[int]] = {u: [] for u in dist}
    indegree = dict.fromkeys(dist, 0)
    for u, du in dist.items():
        for v, cost in space.moves[u]:
            if v in dist and v not in starts and abs(du + cost - dist[v]) <= TIE_TOLERANCE:
                succ[u].append(v)
                indegree[v] += 1

    sigma = {u: (1 if u in starts else 0) for u in dist}
    ready = [(dist[u], u) for u in dist if indegree[u] == 0]
    ready.sort()
    order: List[int] = []
    while ready:
        _, u = heappop(ready)
        order.append(u)
        for v in succ[u]:
            sigma[v] += sigma[u]
            indegree[v] -= 1
            if indegree[v] == 0:
                heappush(ready, (dist[v], v))
    if len(order) < len(dist):
        logger.debug(f"source {source}: {len(dist) - len(order)} states on zero-cost cycles left out")

    # destination weight of each state: its share of the paths to its segment
    zero = Fraction(0) if exact else 0.0
    by_segment: Dict[int, List[int]] = {}
    for u in order:
        k = owner[u]
        if k != source and (targets is None or k in targets):
            by_segment.setdefault(k, []).append(u)
    seed: Dict[int, object] = {}
    for states in by_segment.values():
        low = min(dist[s] for s in states)
        tied = [s for s in states if dist[s] <= low + TIE_TOLERANCE]
        paths = sum(sigma[s] for s in tied)
        for s in tied:
            seed[s] = Fraction(sigma[s], paths) if exact else sigma[s] / paths

    delta: Dict[int, object] = {}
    for v in reversed(order):
        total = zero
        for w in succ[v]:
            if w not in delta:
                continue
            share = Fraction(sigma[v], sigma[w]) if exact else sigma[v] / sigma[w]
            total += share * (seed.get(w, zero) + delta[w])
        delta[v] = total

    out: Dict[int, object] = {}
    for u in order:
        if owner[u] != source and delta[u]:
            out[owner[u]] = out.get(owner[u], zero) + delta[u]
    return out


def _targets(space: SearchSpace, source: int, radius: float) -> Optional[Set[int]]:
    within = _within_radius(space.metric, source, radius)
    if within is not None:
        within.discard(source)
    return within


def _choice_chunk(space: SearchSpace, sources: Sequence[int], radius: float, exact: bool) -> list:
    totals = [Fraction(0) if exact else 0.0 for _ in space.metric]
    for source in sources:
        targets = _targets(space, source, radius)
        for node, value in sorted(_source_dependencies(space, source, targets, exact).items()):
            totals[node] += value
    return totals


_WORKER_STATE: Dict[str, object] = {}


def _init_worker(space: SearchSpace, radius: float, exact: bool):
    _WORKER_STATE.update(space=space, radius=radius, exact=exact)


def _worker_chunk(sources: Sequence[int]) -> list:
    return _choice_chunk(_WORKER_STATE["space"], sources, _WORKER_STATE["radius"], _WORKER_STATE["exact"])


def log_weights(raw: Sequence) -> np.ndarray:
    """w = ln(c) for c > 1, else 0"""
    return np.array([math.log(c) if c > 1 else 0.0 for c in raw], dtype=float)


@time_logger
def choice(graph: StreetGraph, radius: float = 500.0, mode: ChoiceMode = ChoiceMode.ANGULAR,
           exact: bool = False, jobs: int = 1, chunk_size: int = DEFAULT_CHUNK_SIZE) -> ChoiceScores:
    """
    Space-syntax choice of every segment

    For each source segment only destinations within `radius` meters
    (midpoint to midpoint along the network) are counted. Their shortest
    paths are searched over the whole network, so a longer radius only
    adds pairs. Each path contributes the share of co-minimal paths
    crossing an interior segment, and every unordered pair is counted once.

    Args:
        graph: Segment-dual graph
        radius: Metric radius in meters (math.inf for global choice)
        mode: Angular (cumulative turn) or topological (hop count) cost
        exact: Accumulate in rationals; `raw` then holds Fractions
        jobs: Worker processes; sources are split into fixed chunks whose
            partial sums are added in chunk order
        chunk_size: Sources per chunk

    Returns:
        ChoiceScores with raw c_i and floored log weights w_i

    Raises:
        GeometryDomainError: If radius is not positive
    """
    if not radius > 0:
        raise GeometryDomainError(f"choice radius must be positive, got {radius}")
    mode = ChoiceMode(mode)
    space = SearchSpace.build(graph, mode)
    n = len(space.metric)
    chunks = [list(range(start, min(start + chunk_size, n))) for start in range(0, n, chunk_size)]

    logger.info(f"Computing {mode.value} choice for {n} segments at radius {radius} ({len(chunks)} chunks, {jobs} jobs)")
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(space, radius, exact)) as executor:
            partials = list(executor.map(_worker_chunk, chunks))
    else:
        partials = [_choice_chunk(space, chunk, radius, exact) for chunk in chunks]

    totals = [Fraction(0) if exact else 0.0 for _ in range(n)]
    for partial in partials:
        for i, value in enumerate(partial):
            totals[i] += value
    # ordered source/destination pairs were each visited from both ends
    totals = [value / 2 for value in totals]

    raw = np.array(totals, dtype=object) if exact else np.array(totals, dtype=float)
    return ChoiceScores(
        segment_ids=tuple(graph.ids),
        raw=raw,
        weights=log_weights(totals),
        radius=radius,
        mode=mode,
    )


def normalize_scores(scores: ChoiceScores) -> ChoiceScores:
    """Attach a 0-100 min-max rescaling of w; all-equal weights map to 0"""
    weights = np.asarray(scores.weights, dtype=float)
    if weights.size == 0:
        normalized = weights.copy()
    else:
        lo, hi = float(weights.min()), float(weights.max())
        if hi - lo > 0:
            normalized = (weights - lo) / (hi - lo) * 100.0
        else:
            normalized = np.zeros_like(weights)
    return ChoiceScores(scores.segment_ids, scores.raw, scores.weights, scores.radius, scores.mode, normalized)

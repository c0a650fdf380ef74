"""
Street Network Data Models
Segments, the segment-dual graph and choice scores
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from shapely.geometry import LineString, Point

from ..exceptions import GeometryDomainError


class ChoiceMode(str, Enum):
    """Shortest-path cost used by the choice measure"""
    ANGULAR = "angular"
    TOPOLOGICAL = "topological"


def bearing(start: Tuple[float, float], end: Tuple[float, float]) -> float:
    """Compass bearing in degrees [0, 360), clockwise from grid north"""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    return math.degrees(math.atan2(dx, dy)) % 360.0


@dataclass(frozen=True)
class StreetSegment:
    """One road centerline segment"""
    id: str
    geometry: LineString
    length: float
    midpoint: Tuple[float, float]
    azimuth: float

    @classmethod
    def from_linestring(cls, segment_id: str, line: LineString) -> "StreetSegment":
        """
        Derive length, midpoint and azimuth from a centerline

        Raises:
            GeometryDomainError: If the line has zero length
        """
        if line.is_empty or line.length <= 0:
            raise GeometryDomainError(f"segment {segment_id}: zero-length geometry")
        mid = line.interpolate(0.5, normalized=True)
        coords = list(line.coords)
        return cls(
            id=str(segment_id),
            geometry=line,
            length=float(line.length),
            midpoint=(mid.x, mid.y),
            azimuth=bearing(coords[0], coords[-1]),
        )

    @property
    def endpoints(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        coords = self.geometry.coords
        return tuple(coords[0]), tuple(coords[-1])

    def outward_bearing(self, at_end: bool) -> float:
        """Bearing leaving the junction at the given end, along the first/last vertex pair"""
        coords = list(self.geometry.coords)
        if at_end:
            return bearing(coords[-1], coords[-2])
        return bearing(coords[0], coords[1])

    def midpoint_point(self) -> Point:
        return Point(self.midpoint)


@dataclass(frozen=True)
class StreetGraph:
    """
    Segment-dual street graph

    Nodes are segment indices into `segments`; each edge carries `turn`
    (degrees, 0-180, smallest over the shared junctions), `metric` (meters
    between the two midpoints) and, when built from geometry, `junctions`.
    """
    segments: Tuple[StreetSegment, ...]
    graph: nx.Graph
    snap_tolerance: float = 0.1

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def ids(self) -> List[str]:
        return [s.id for s in self.segments]

    def index_of(self, segment_id: str) -> int:
        return self._index[segment_id]

    @property
    def _index(self) -> Dict[str, int]:
        cached = self.__dict__.get("_index_cache")
        if cached is None:
            cached = {s.id: i for i, s in enumerate(self.segments)}
            object.__setattr__(self, "_index_cache", cached)
        return cached

    def links(self) -> List[Tuple[str, str, float]]:
        """(segment_id, segment_id, turn) for every adjacency, in index order"""
        out = []
        for u, v, data in sorted(self.graph.edges(data=True)):
            a, b = sorted((u, v))
            out.append((self.segments[a].id, self.segments[b].id, data["turn"]))
        return out

    def adjacency_lists(self) -> List[List[Tuple[int, float, float]]]:
        """Plain per-node lists of (neighbor, metric, turn) for the path searches"""
        adjacency: List[List[Tuple[int, float, float]]] = [[] for _ in self.segments]
        for u in range(len(self.segments)):
            for v in sorted(self.graph.adj[u]):
                data = self.graph.adj[u][v]
                adjacency[u].append((v, data["metric"], data["turn"]))
        return adjacency


@dataclass(frozen=True)
class ChoiceScores:
    """Raw choice c_i, floored log weight w_i and optional 0-100 rescaling"""
    segment_ids: Tuple[str, ...]
    raw: np.ndarray
    weights: np.ndarray
    radius: float
    mode: ChoiceMode = ChoiceMode.ANGULAR
    normalized: Optional[np.ndarray] = field(default=None)

    def weight_map(self) -> Dict[str, float]:
        return dict(zip(self.segment_ids, self.weights.tolist()))

    def raw_map(self) -> Dict[str, float]:
        return dict(zip(self.segment_ids, self.raw.tolist()))

    def scaled(self, factor: float) -> "ChoiceScores":
        """Same scores with every weight multiplied by `factor`"""
        return ChoiceScores(self.segment_ids, self.raw, self.weights * factor, self.radius, self.mode, self.normalized)

    def to_frame(self) -> pd.DataFrame:
        normalized = self.normalized if self.normalized is not None else np.full(len(self.raw), np.nan)
        return pd.DataFrame({
            "segment_id": list(self.segment_ids),
            "c_raw": self.raw,
            "w": self.weights,
            "normalized_0_100": normalized,
        })

"""
Accessibility Target Models
Population grid cells, walking reach sets and per-area target shares
"""

from dataclasses import dataclass, field
from typing import FrozenSet, Optional, Tuple

from pydantic import BaseModel, Field
from shapely.geometry import box
from shapely.geometry.base import BaseGeometry

from ..exceptions import GeometryDomainError


@dataclass(frozen=True)
class PopulationCell:
    """One square cell of the population grid"""
    cell_id: str
    centroid: Tuple[float, float]
    cell_polygon: BaseGeometry
    population: float

    def __post_init__(self):
        if self.population < 0:
            raise GeometryDomainError(f"cell {self.cell_id}: negative population")

    @classmethod
    def square(cls, cell_id: str, x: float, y: float, size: float, population: float) -> "PopulationCell":
        half = size / 2.0
        return cls(cell_id, (float(x), float(y)), box(x - half, y - half, x + half, y + half), float(population))


@dataclass(frozen=True)
class ReachSet:
    """Cells and green polygons within the walking budget of one cell"""
    cell_id: str
    reachable_cells: FrozenSet[str]
    reachable_green_polygons: FrozenSet[str] = field(default_factory=frozenset)
    warning: Optional[str] = None


@dataclass(frozen=True)
class TargetFlags:
    """Per-cell target compliance"""
    who: bool
    esa_who: bool
    ne: bool


class TargetResult(BaseModel):
    """Population-weighted target shares for one area"""
    area_id: str
    who_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    esa_who_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    ne_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    population: float = Field(0.0, ge=0.0, description="Population apportioned from the grid")

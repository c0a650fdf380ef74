"""
Spatial Data Models
Areas, binary green rasters, green-space polygons and street buffers
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple, Any

import numpy as np
from shapely.geometry import Polygon, MultiPolygon
from shapely.geometry.base import BaseGeometry

from ..exceptions import GeometryDomainError


class AreaKind(str, Enum):
    """Areal unit type"""
    WARD = "ward"
    LSOA = "lsoa"


class GreenSpaceKind(str, Enum):
    """Green space type"""
    PARK = "park"
    GARDEN = "garden"


class Access(str, Enum):
    """Public accessibility of a green space"""
    PUBLIC = "public"
    RESTRICTED = "restricted"


REQUIRED_COVARIATES = ("imd_score", "building_density", "median_age", "white_percent")


def ensure_polygonal(geometry: BaseGeometry, label: str) -> BaseGeometry:
    """Reject anything that is not a valid, non-empty (multi)polygon"""
    if not isinstance(geometry, (Polygon, MultiPolygon)):
        raise GeometryDomainError(f"{label}: expected a polygon, got {geometry.geom_type}")
    if geometry.is_empty:
        raise GeometryDomainError(f"{label}: empty polygon")
    if not geometry.is_valid:
        raise GeometryDomainError(f"{label}: invalid polygon geometry")
    return geometry


@dataclass(frozen=True)
class AreaUnit:
    """A ward or LSOA; the unit of every analysis"""
    id: str
    kind: AreaKind
    boundary: BaseGeometry
    population: float = 0.0
    covariates: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        ensure_polygonal(self.boundary, f"area {self.id}")
        if self.boundary.area <= 0:
            raise GeometryDomainError(f"area {self.id}: boundary has no area")
        if self.population < 0:
            raise GeometryDomainError(f"area {self.id}: negative population {self.population}")

    def missing_covariates(self) -> Tuple[str, ...]:
        return tuple(name for name in REQUIRED_COVARIATES if name not in self.covariates)

    def to_properties(self) -> Dict[str, Any]:
        return {"id": self.id, "kind": self.kind.value, "population": self.population, **self.covariates}


@dataclass(frozen=True)
class GreenRaster:
    """
    Binary green / not-green grid

    `origin` is the lower-left corner in projected meters. `cells` has shape
    (height, width) and row 0 is the northernmost row, as in ESRI ASCII grids.
    """
    origin: Tuple[float, float]
    cell_size: float
    cells: np.ndarray

    def __post_init__(self):
        if self.cell_size <= 0:
            raise GeometryDomainError(f"cell_size must be positive, got {self.cell_size}")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2:
            raise GeometryDomainError("raster cells must be a 2-D array")
        cells = cells.copy()
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def pixel_area(self) -> float:
        return self.cell_size * self.cell_size

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.cell_size, y0 + self.height * self.cell_size)

    @property
    def green_count(self) -> int:
        return int(self.cells.sum())

    def window(self, bounds: Tuple[float, float, float, float]) -> Tuple[slice, slice]:
        """Row/column slices of every pixel whose center may fall inside `bounds`"""
        x0, y0 = self.origin
        minx, miny, maxx, maxy = bounds
        col_start = max(int(np.floor((minx - x0) / self.cell_size - 0.5)), 0)
        col_stop = min(int(np.ceil((maxx - x0) / self.cell_size + 0.5)), self.width)
        top = y0 + self.height * self.cell_size
        row_start = max(int(np.floor((top - maxy) / self.cell_size - 0.5)), 0)
        row_stop = min(int(np.ceil((top - miny) / self.cell_size + 0.5)), self.height)
        return slice(row_start, max(row_start, row_stop)), slice(col_start, max(col_start, col_stop))

    def centers(self, rows: slice, cols: slice) -> Tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinate grids for a window"""
        x0, y0 = self.origin
        col_idx = np.arange(cols.start, cols.stop)
        row_idx = np.arange(rows.start, rows.stop)
        xs = x0 + (col_idx + 0.5) * self.cell_size
        ys = y0 + (self.height - row_idx - 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def with_cells(self, cells: np.ndarray) -> "GreenRaster":
        return GreenRaster(origin=self.origin, cell_size=self.cell_size, cells=cells)


@dataclass(frozen=True)
class GreenSpacePolygon:
    """Park or garden polygon"""
    id: str
    kind: GreenSpaceKind
    access: Access
    boundary: BaseGeometry

    def __post_init__(self):
        ensure_polygonal(self.boundary, f"green space {self.id}")

    @property
    def area(self) -> float:
        return self.boundary.area

    @property
    def is_public(self) -> bool:
        return self.access == Access.PUBLIC


@dataclass(frozen=True)
class Buffer:
    """Street buffer B_i around one segment"""
    source_segment_id: str
    geometry: BaseGeometry
    half_width: float

"""
Greenery Metric Models
Street imagery records and the per-area greenery vector
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field

from ..exceptions import GeometryDomainError


@dataclass(frozen=True)
class StreetImageRecord:
    """Pre-segmented street-level image; only its green pixel share is used"""
    image_id: str
    location: Tuple[float, float]
    green_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.green_fraction <= 1.0:
            raise GeometryDomainError(f"image {self.image_id}: green_fraction {self.green_fraction} outside [0, 1]")


METRIC_COLUMNS = (
    "g_total_ndvi",
    "g_onroad_ndvi",
    "g_onroad_gsv",
    "g_offroad",
    "g_onroad_ndvi_unweighted",
    "g_onroad_gsv_unweighted",
)


class GreeneryVector(BaseModel):
    """
    Greenery measures for one area
    Target shares are filled in by the accessibility stage; a measure the
    inputs cannot support (area off the cover raster, no imagery) is None
    """
    area_id: str = Field(..., description="Area identifier")
    g_total_ndvi: Optional[float] = Field(None, ge=0.0, le=1.0, description="Share of area pixels that are green")
    g_onroad_ndvi: Optional[float] = Field(None, ge=0.0, le=1.0, description="Choice-weighted buffered public green share")
    g_onroad_gsv: Optional[float] = Field(None, ge=0.0, description="Choice-weighted street imagery green share")
    g_offroad: Optional[float] = Field(None, ge=0.0, le=1.0, description="Public green share outside every buffer")
    g_onroad_ndvi_unweighted: Optional[float] = Field(None, ge=0.0, le=1.0, description="Plain mean of per-segment NDVI scores")
    g_onroad_gsv_unweighted: Optional[float] = Field(None, ge=0.0, description="Plain mean of per-segment imagery scores")
    who_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    esa_who_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    ne_share: Optional[float] = Field(None, ge=0.0, le=1.0)
    onroad_pixels: int = Field(0, ge=0, description="Public green pixels inside any buffer")
    offroad_pixels: int = Field(0, ge=0, description="Public green pixels outside every buffer")
    public_green_pixels: int = Field(0, ge=0)
    area_pixels: int = Field(0, ge=0)
    warnings: List[str] = Field(default_factory=list)

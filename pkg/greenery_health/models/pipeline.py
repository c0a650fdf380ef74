"""
Pipeline Models
Run configuration, validation report and run manifest
"""

from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .greenery import METRIC_COLUMNS
from .network import ChoiceMode


class Stage(str, Enum):
    """Pipeline stages in dependency order"""
    METRICS = "metrics"
    TARGETS = "targets"
    PRESCRIPTIONS = "prescriptions"
    STATS = "stats"


STAGE_ORDER = (Stage.METRICS, Stage.TARGETS, Stage.PRESCRIPTIONS, Stage.STATS)
STAGE_DEPENDENCIES = {
    Stage.METRICS: (),
    Stage.TARGETS: (),
    Stage.PRESCRIPTIONS: (),
    Stage.STATS: (Stage.METRICS, Stage.TARGETS, Stage.PRESCRIPTIONS),
}

TREATMENT_COLUMNS = METRIC_COLUMNS + ("who_share", "esa_who_share", "ne_share")


class InputPaths(BaseModel):
    """Every input file the engine reads"""
    areas: Path
    green_cover: Path
    parks: Path
    segments: Path
    images: Optional[Path] = None
    population_grid: Path
    prescriptions: Dict[str, Path] = Field(..., description="Month (YYYY-MM) -> practice prescribing file")
    drugs: Optional[Path] = None
    gps: Path
    patients: Path
    covariates: Path
    condition_lists: Dict[str, Path] = Field(default_factory=dict)

    def all_files(self) -> Dict[str, Path]:
        """Flat name -> path map, in a stable order"""
        files: Dict[str, Path] = {}
        for name in ("areas", "green_cover", "parks", "segments", "images", "population_grid",
                     "drugs", "gps", "patients", "covariates"):
            path = getattr(self, name)
            if path is not None:
                files[name] = path
        for month in sorted(self.prescriptions):
            files[f"prescriptions[{month}]"] = self.prescriptions[month]
        for condition in sorted(self.condition_lists):
            files[f"condition_lists[{condition}]"] = self.condition_lists[condition]
        return files


class Parameters(BaseModel):
    """Numerical parameters; defaults are the study's choices"""
    buffer_half_width: float = Field(10.0, gt=0)
    snap_tolerance: float = Field(0.1, ge=0)
    choice_radius: float = Field(500.0, gt=0)
    choice_mode: ChoiceMode = ChoiceMode.ANGULAR
    per_buffer_denominator: bool = False
    gsv_aggregation: str = Field("mean", pattern="^(mean|sum)$")
    cover_cell_size: float = Field(1.0, gt=0)

    walk_budget_minutes: float = Field(5.0, gt=0)
    walk_speed_kmh: float = Field(4.8, gt=0, le=20)
    max_access_distance: float = Field(200.0, gt=0)
    who_min_area: float = Field(5000.0, gt=0)
    esa_who_min_area: float = Field(5000.0, gt=0)
    ne_min_area: float = Field(20000.0, gt=0)
    grid_cell_size: float = Field(60.0, gt=0)

    prescription_year: Optional[int] = Field(None, ge=2010)
    excluded_gp_statuses: List[str] = Field(default_factory=lambda: ["closed", "prison"])

    bootstrap_samples: int = Field(1000, ge=10)
    seed: int = 0
    caliper: Optional[float] = Field(0.2, gt=0)
    min_matched_pairs: int = Field(10, ge=1)
    confounders: List[str] = Field(
        default_factory=lambda: ["imd_score", "building_density", "median_age", "white_percent"]
    )
    treatment_metrics: List[str] = Field(default_factory=lambda: [
        "g_total_ndvi", "who_share", "esa_who_share", "ne_share", "g_onroad_ndvi", "g_onroad_gsv", "g_offroad",
    ])
    outcome_conditions: List[str] = Field(default_factory=lambda: [
        "diabetes", "hypertension", "asthma", "depression", "anxiety", "opioids", "total",
    ])
    gwr_metrics: List[str] = Field(default_factory=lambda: ["g_onroad_ndvi"])
    gwr_bandwidth: Optional[int] = Field(None, ge=3)
    reduction_metric: str = "g_onroad_ndvi"
    jobs: int = Field(1, ge=1)

    @field_validator("treatment_metrics", "gwr_metrics")
    @classmethod
    def known_metrics(cls, values):
        unknown = [v for v in values if v not in TREATMENT_COLUMNS]
        if unknown:
            raise ValueError(f"unknown greenery metrics: {unknown}")
        return values

    @model_validator(mode="after")
    def reduction_metric_known(self):
        if self.reduction_metric not in TREATMENT_COLUMNS:
            raise ValueError(f"unknown reduction metric: {self.reduction_metric}")
        return self

    @property
    def walk_budget_meters(self) -> float:
        return self.walk_speed_kmh * 1000.0 / 60.0 * self.walk_budget_minutes


class PipelineConfig(BaseModel):
    """Validated run configuration"""
    inputs: InputPaths
    parameters: Parameters = Field(default_factory=Parameters)
    output_dir: Path = Path("out")
    source: Optional[Path] = Field(None, description="Config file the values were read from")


class ValidationIssue(BaseModel):
    """One finding of the validator"""
    check: str
    message: str
    fatal: bool
    rows: List[int] = Field(default_factory=list)


class ValidationReport(BaseModel):
    """Machine-readable outcome of `validate`"""
    issues: List[ValidationIssue] = Field(default_factory=list)

    @property
    def errors(self) -> List[ValidationIssue]:
        return [i for i in self.issues if i.fatal]

    @property
    def warnings(self) -> List[ValidationIssue]:
        return [i for i in self.issues if not i.fatal]

    @property
    def ok(self) -> bool:
        return not self.errors

    def add(self, check: str, message: str, fatal: bool, rows: Optional[List[int]] = None):
        self.issues.append(ValidationIssue(check=check, message=message, fatal=fatal, rows=list(rows or [])))


class StageRecord(BaseModel):
    """Outcome of one stage in a run"""
    status: str = Field(..., pattern="^(computed|cached|failed|skipped)$")
    cache_key: Optional[str] = None
    seconds: float = 0.0
    outputs: List[str] = Field(default_factory=list)
    error: Optional[str] = None


class RunManifest(BaseModel):
    """Provenance of a run"""
    config_hash: str
    input_digests: Dict[str, str]
    software_version: str
    seed: int
    stages: Dict[str, StageRecord] = Field(default_factory=dict)
    warnings: List[str] = Field(default_factory=list)
    started_at: datetime = Field(default_factory=datetime.now)

    @property
    def ok(self) -> bool:
        return all(record.status in ("computed", "cached") for record in self.stages.values())

    @property
    def failed_stage(self) -> Optional[str]:
        for name, record in self.stages.items():
            if record.status == "failed":
                return name
        return None

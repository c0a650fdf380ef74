"""
Domain models for the greenery exposure engine
"""

from .geo import Access, AreaKind, AreaUnit, Buffer, GreenRaster, GreenSpaceKind, GreenSpacePolygon, REQUIRED_COVARIATES
from .greenery import GreeneryVector, METRIC_COLUMNS, StreetImageRecord
from .network import ChoiceMode, ChoiceScores, StreetGraph, StreetSegment
from .pipeline import (
    InputPaths,
    Parameters,
    PipelineConfig,
    RunManifest,
    Stage,
    StageRecord,
    ValidationIssue,
    ValidationReport,
)
from .prescriptions import (
    AreaPrescriptionRate,
    Condition,
    ConditionList,
    GpPractice,
    IngestionReport,
    PrescriptionRow,
)
from .stats import AteResult, DesignMatrix, GwrResult, MinMaxScale
from .targets import PopulationCell, ReachSet, TargetFlags, TargetResult

__all__ = [
    "Access", "AreaKind", "AreaUnit", "Buffer", "GreenRaster", "GreenSpaceKind", "GreenSpacePolygon",
    "REQUIRED_COVARIATES", "GreeneryVector", "METRIC_COLUMNS", "StreetImageRecord", "ChoiceMode",
    "ChoiceScores", "StreetGraph", "StreetSegment", "InputPaths", "Parameters", "PipelineConfig",
    "RunManifest", "Stage", "StageRecord", "ValidationIssue", "ValidationReport", "AreaPrescriptionRate",
    "Condition", "ConditionList", "GpPractice", "IngestionReport", "PrescriptionRow", "AteResult",
    "DesignMatrix", "GwrResult", "MinMaxScale", "PopulationCell", "ReachSet", "TargetFlags", "TargetResult",
]

"""Pipeline Stage Analyzers"""

from .base_analyzer import BaseAnalyzer, StageOutput
from .greenery_analyzer import GreeneryAnalyzer
from .prescription_analyzer import PrescriptionAnalyzer
from .stats_analyzer import StatsAnalyzer
from .target_analyzer import TargetAnalyzer

ANALYZERS = {
    "metrics": GreeneryAnalyzer,
    "targets": TargetAnalyzer,
    "prescriptions": PrescriptionAnalyzer,
    "stats": StatsAnalyzer,
}

__all__ = [
    "ANALYZERS",
    "BaseAnalyzer",
    "GreeneryAnalyzer",
    "PrescriptionAnalyzer",
    "StageOutput",
    "StatsAnalyzer",
    "TargetAnalyzer",
]

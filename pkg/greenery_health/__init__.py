"""
Greenery Health Engine
Street-level greenery exposure, green-space access targets and their
association with prescribing rates
"""

__version__ = "1.0.0"

from .models.pipeline import PipelineConfig, RunManifest, Stage
from .utils.config_loader import get_config_loader, load_pipeline_config

__all__ = [
    "PipelineConfig",
    "RunManifest",
    "Stage",
    "get_config_loader",
    "load_pipeline_config",
]

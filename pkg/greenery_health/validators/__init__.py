"""Input Validators"""

from .pipeline_validator import PipelineValidator

__all__ = ["PipelineValidator"]

"""Pipeline orchestration"""

from .pipeline_runner import PipelineRunner, resolve_stages, run_pipeline

__all__ = ["PipelineRunner", "resolve_stages", "run_pipeline"]

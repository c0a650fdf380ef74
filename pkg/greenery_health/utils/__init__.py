"""
Utility modules for the greenery exposure engine
"""

from .config_loader import ConfigLoader, get_config_loader, load_pipeline_config
from .timing import time_logger

__all__ = ["ConfigLoader", "get_config_loader", "load_pipeline_config", "time_logger"]

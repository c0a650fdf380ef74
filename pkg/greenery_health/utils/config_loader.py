"""
Configuration Loader Utility
Loads YAML pipeline configurations with caching and validation
"""

import yaml
from pathlib import Path
from typing import Dict, Any, Optional
from functools import lru_cache
import logging

from pydantic import ValidationError

from ..exceptions import ConfigurationError
from ..models.pipeline import PipelineConfig

logger = logging.getLogger(__name__)

DEFAULTS_FILE = "pipeline.yaml"


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; values from `override` win"""
    merged = dict(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


class ConfigLoader:
    """
    Reads the shipped defaults and user pipeline files
    """

    def __init__(self, config_dir: Optional[Path] = None):
        """
        Initialize configuration loader

        Args:
            config_dir: Directory holding the shipped defaults. If None, uses the package's.
        """
        if config_dir is None:
            self.config_dir = Path(__file__).parent.parent / "config"
        else:
            self.config_dir = Path(config_dir)

        if not self.config_dir.exists():
            raise ConfigurationError(f"Configuration directory not found: {self.config_dir}")

        logger.debug(f"ConfigLoader initialized with directory: {self.config_dir}")

    @lru_cache(maxsize=32)
    def load_yaml(self, filename: str) -> Dict[str, Any]:
        """
        Load a YAML file from the config directory, or an absolute path

        Args:
            filename: Name of YAML file (with or without .yaml extension) or a full path

        Returns:
            Dictionary containing configuration data

        Raises:
            ConfigurationError: If the file is missing or malformed
        """
        path = Path(filename)
        if not path.is_absolute():
            if path.suffix not in (".yaml", ".yml"):
                path = path.with_suffix(".yaml")
            path = self.config_dir / path

        return self.read(path)

    def read(self, path: Path) -> Dict[str, Any]:
        """Read one YAML mapping without caching"""
        if not path.exists():
            raise ConfigurationError(f"Configuration file not found: {path}")

        try:
            with open(path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            logger.error(f"Error parsing YAML file {path}: {e}")
            raise ConfigurationError(f"Malformed YAML in {path}: {e}") from e

        if config is not None and not isinstance(config, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        logger.debug(f"Loaded configuration from: {path}")
        return config or {}

    def defaults(self) -> Dict[str, Any]:
        return self.load_yaml(DEFAULTS_FILE)

    def load_pipeline_config(self, path: Path, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
        """
        Merge defaults, the user file and CLI overrides into a validated config

        Relative input paths and output_dir resolve against the config file's directory.

        Args:
            path: User YAML file
            overrides: Nested dict applied last (e.g. {"parameters": {"seed": 3}})

        Returns:
            PipelineConfig

        Raises:
            ConfigurationError: Missing file, malformed YAML or failed validation
        """
        path = Path(path).resolve()
        raw = deep_merge(self.defaults(), self.read(path))
        raw = deep_merge(raw, overrides or {})
        base = path.parent

        inputs = dict(raw.get("inputs") or {})
        for key, value in list(inputs.items()):
            if isinstance(value, dict):
                inputs[key] = {k: str(base / v) for k, v in value.items() if v is not None}
            elif value is not None:
                inputs[key] = str(base / value)
        raw["inputs"] = inputs
        if raw.get("output_dir") is not None:
            raw["output_dir"] = str(base / raw["output_dir"])
        raw["source"] = str(path)

        try:
            config = PipelineConfig.model_validate(raw)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration {path.name}:\n{e}") from e
        logger.info(f"Loaded pipeline configuration from {path}")
        return config

    def clear_cache(self):
        """Clear the configuration cache"""
        self.load_yaml.cache_clear()
        logger.debug("Configuration cache cleared")


# Singleton instance for global use
_config_loader_instance: Optional[ConfigLoader] = None


def get_config_loader(config_dir: Optional[Path] = None) -> ConfigLoader:
    """
    Get singleton ConfigLoader instance

    Args:
        config_dir: Optional configuration directory path

    Returns:
        ConfigLoader instance
    """
    global _config_loader_instance

    if _config_loader_instance is None:
        _config_loader_instance = ConfigLoader(config_dir)

    return _config_loader_instance


def load_pipeline_config(path: Path, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """Convenience function to load a pipeline configuration"""
    return get_config_loader().load_pipeline_config(path, overrides)

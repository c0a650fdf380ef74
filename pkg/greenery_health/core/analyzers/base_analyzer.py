"""
Base Analyzer Abstract Class
Defines interface for all pipeline stage analyzers
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping
import logging

import pandas as pd

from ...models.pipeline import PipelineConfig
from ...storage.writers import write_csv, write_geojson, write_json

logger = logging.getLogger(__name__)


@dataclass
class StageOutput:
    """Files a stage produces, keyed by file name"""
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    documents: Dict[str, Any] = field(default_factory=dict)
    geojson: Dict[str, List[dict]] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def write(self, directory: Path) -> List[str]:
        """Write every file into `directory`; returns the file names"""
        for name, frame in self.tables.items():
            write_csv(frame, directory / name)
        for name, document in self.documents.items():
            write_json(document, directory / name)
        for name, features in self.geojson.items():
            write_geojson(features, directory / name)
        return sorted([*self.tables, *self.documents, *self.geojson])


class BaseAnalyzer(ABC):
    """
    Abstract base class for all stage analyzers
    Enforces consistent interface across the pipeline stages
    """

    stage: str = ""
    # parameter names that change this stage's outputs
    parameter_keys: tuple = ()
    # input file names (InputPaths.all_files keys or prefixes) this stage reads
    input_keys: tuple = ()

    def __init__(self, config: PipelineConfig):
        """
        Initialize base analyzer

        Args:
            config: Validated pipeline configuration
        """
        self.config = config
        self.params = config.parameters
        self.logger = logging.getLogger(self.__class__.__name__)
        self.warnings: List[str] = []

    @abstractmethod
    def analyze(self, upstream: Mapping[str, Path]) -> StageOutput:
        """
        Run the stage

        Args:
            upstream: Stage name -> directory holding that stage's outputs

        Returns:
            StageOutput with the files to publish
        """
        pass

    def cache_parameters(self) -> Dict[str, Any]:
        """Subset of parameters feeding this stage's cache key"""
        dumped = self.params.model_dump(mode="json")
        return {key: dumped[key] for key in self.parameter_keys}

    def input_files(self) -> Dict[str, Path]:
        files = self.config.inputs.all_files()
        return {
            name: path for name, path in files.items()
            if any(name == key or name.startswith(f"{key}[") for key in self.input_keys)
        }

    def warn(self, message: str):
        """Log a non-fatal condition and keep it for the manifest"""
        self.logger.warning(message)
        self.warnings.append(message)

    def validate_input(self, data: Mapping[str, Any], required_fields: List[str]) -> tuple[bool, List[str]]:
        """
        Validate input data has required fields

        Args:
            data: Input mapping
            required_fields: List of required field names

        Returns:
            Tuple of (is_valid, missing_fields)
        """
        missing_fields = [name for name in required_fields if data.get(name) is None]
        is_valid = len(missing_fields) == 0

        if not is_valid:
            self.logger.warning(f"Missing required fields: {missing_fields}")

        return is_valid, missing_fields

    def log_analysis(self, output: StageOutput):
        """
        Log a stage summary for debugging and auditing

        Args:
            output: Stage output
        """
        self.logger.info(f"Analysis Type: {self.stage}")
        for name, frame in output.tables.items():
            self.logger.info(f"  {name}: {len(frame)} rows")
        if self.warnings:
            self.logger.info(f"  warnings: {len(self.warnings)}")

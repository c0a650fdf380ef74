"""
Pipeline Runner
Runs the stages in dependency order over a content-addressed cache
"""

import json
import logging
import shutil
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .. import __version__
from ..core.analyzers import ANALYZERS, BaseAnalyzer
from ..exceptions import ConfigurationError, StageFailure
from ..models.pipeline import STAGE_DEPENDENCIES, STAGE_ORDER, PipelineConfig, RunManifest, Stage, StageRecord
from ..storage.cache import StageCache, content_key, file_digest
from ..storage.writers import write_json
from ..utils.timing import time_logger

logger = logging.getLogger(__name__)

WARNINGS_FILE = "_warnings.json"
MANIFEST_FILE = "manifest.json"


def resolve_stages(requested: Optional[Iterable[str]] = None) -> List[Stage]:
    """
    Requested stages plus everything they depend on, in run order

    Raises:
        ConfigurationError: Unknown stage name
    """
    if not requested:
        return list(STAGE_ORDER)
    try:
        wanted = {Stage(name.strip()) for name in requested if name.strip()}
    except ValueError as e:
        raise ConfigurationError(f"Unknown stage: {e}") from e
    pending = list(wanted)
    while pending:
        for dependency in STAGE_DEPENDENCIES[pending.pop()]:
            if dependency not in wanted:
                wanted.add(dependency)
                pending.append(dependency)
    return [stage for stage in STAGE_ORDER if stage in wanted]


class PipelineRunner:
    """Runs pipeline stages, caching their outputs under <output_dir>/cache"""

    def __init__(self, config: PipelineConfig):
        """
        Initialize pipeline runner

        Args:
            config: Validated pipeline configuration
        """
        self.config = config
        self.output_dir = Path(config.output_dir)
        self.cache = StageCache(self.output_dir / "cache")
        logger.info(f"PipelineRunner initialized (output: {self.output_dir})")

    def input_digests(self) -> Dict[str, str]:
        return {name: file_digest(path) for name, path in self.config.inputs.all_files().items()}

    def stage_key(self, analyzer: BaseAnalyzer, digests: Dict[str, str], upstream_keys: Dict[str, str]) -> str:
        """Cache key of a stage: its parameters, input digests, upstream keys and the software version"""
        return content_key({
            "stage": analyzer.stage,
            "parameters": analyzer.cache_parameters(),
            "inputs": {name: digests[name] for name in analyzer.input_files()},
            "upstream": upstream_keys,
            "version": __version__,
        })

    def run(self, stages: Optional[Iterable[str]] = None) -> RunManifest:
        """
        Run the requested stages and their dependencies

        Stages whose key is already cached are reused; a failed stage marks
        its dependents as skipped while independent stages still run.

        Args:
            stages: Stage names; all stages when omitted

        Returns:
            RunManifest, also written to <output_dir>/manifest.json
        """
        plan = resolve_stages(stages)
        logger.info(f"Running stages: {', '.join(s.value for s in plan)}")
        self.output_dir.mkdir(parents=True, exist_ok=True)

        digests = self.input_digests()
        manifest = RunManifest(
            config_hash=content_key({
                "parameters": self.config.parameters.model_dump(mode="json"),
                "inputs": digests,
            }),
            input_digests=digests,
            software_version=__version__,
            seed=self.config.parameters.seed,
        )

        keys: Dict[str, str] = {}
        for stage in plan:
            blocked = [d.value for d in STAGE_DEPENDENCIES[stage]
                       if manifest.stages[d.value].status not in ("computed", "cached")]
            if blocked:
                logger.warning(f"Skipping {stage.value}: upstream stages {blocked} did not finish")
                manifest.stages[stage.value] = StageRecord(status="skipped", error=f"upstream failed: {blocked}")
                continue

            analyzer = ANALYZERS[stage.value](self.config)
            upstream_keys = {d.value: keys[d.value] for d in STAGE_DEPENDENCIES[stage]}
            key = self.stage_key(analyzer, digests, upstream_keys)
            keys[stage.value] = key
            record = self._run_stage(analyzer, key, upstream_keys)
            manifest.stages[stage.value] = record
            if record.status != "failed":
                manifest.warnings.extend(self._stage_warnings(stage.value, key))
                self._publish(stage.value, key)

        write_json(manifest.model_dump(mode="json"), self.output_dir / MANIFEST_FILE)
        self._log_results(manifest)
        return manifest

    @time_logger
    def _run_stage(self, analyzer: BaseAnalyzer, key: str, upstream_keys: Dict[str, str]) -> StageRecord:
        stage = analyzer.stage
        start = time.perf_counter()
        if self.cache.has(stage, key):
            logger.info(f"Stage {stage}: cached ({key[:16]})")
            return StageRecord(status="cached", cache_key=key, outputs=self._published_names(stage, key))

        logger.info(f"Stage {stage}: computing ({key[:16]})")
        upstream = {name: self.cache.entry(name, k) for name, k in upstream_keys.items()}
        try:
            output = analyzer.analyze(upstream)

            def build(directory: Path) -> List[str]:
                names = output.write(directory)
                write_json(output.warnings, directory / WARNINGS_FILE)
                return [*names, WARNINGS_FILE]

            self.cache.commit(stage, key, build)
        except Exception as e:
            failure = e if isinstance(e, StageFailure) else StageFailure(stage, e)
            logger.error(str(failure), exc_info=True)
            return StageRecord(status="failed", cache_key=key, seconds=time.perf_counter() - start,
                               error=str(failure))
        return StageRecord(status="computed", cache_key=key, seconds=time.perf_counter() - start,
                           outputs=self._published_names(stage, key))

    def _published_names(self, stage: str, key: str) -> List[str]:
        return [name for name in self.cache.files(stage, key) or [] if not name.startswith("_")]

    def _stage_warnings(self, stage: str, key: str) -> List[str]:
        path = self.cache.entry(stage, key) / WARNINGS_FILE
        if not path.exists():
            return []
        return [f"{stage}: {w}" for w in json.loads(path.read_text(encoding="utf-8"))]

    def _publish(self, stage: str, key: str):
        """Copy a cache entry's files into the output directory"""
        entry = self.cache.entry(stage, key)
        for name in self._published_names(stage, key):
            shutil.copyfile(entry / name, self.output_dir / name)

    def _log_results(self, manifest: RunManifest):
        logger.info("=" * 80)
        logger.info(f"PIPELINE RUN {'COMPLETED' if manifest.ok else 'FAILED'}")
        logger.info("=" * 80)
        for name, record in manifest.stages.items():
            logger.info(f"  {name:<14} {record.status.upper():<9} {record.seconds:8.2f} s  {len(record.outputs)} files")
            if record.error:
                logger.error(f"  - {record.error}")
        if manifest.warnings:
            logger.warning(f"[WARN] Warnings ({len(manifest.warnings)})")
            for warning in manifest.warnings[:5]:
                logger.warning(f"  - {warning}")
        logger.info("=" * 80)


def run_pipeline(config: PipelineConfig, stages: Optional[Iterable[str]] = None) -> RunManifest:
    """Convenience function to run the pipeline"""
    return PipelineRunner(config).run(stages)

"""
Greenery Health command line
Verbs: validate, run, export, report
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from __config__ import (
    EXIT_OK,
    EXIT_STAGE_FAILURE,
    EXIT_VALIDATION,
    GREENERY_CONFIG,
    GREENERY_JOBS,
    GREENERY_LOG_LEVEL,
    GREENERY_OUTPUT_DIR,
)
from greenery_health.exceptions import ConfigurationError, GreeneryError
from greenery_health.exporters import export_choropleth
from greenery_health.models.greenery import METRIC_COLUMNS
from greenery_health.models.pipeline import TREATMENT_COLUMNS, PipelineConfig
from greenery_health.processors import PipelineRunner
from greenery_health.storage.readers import read_areas
from greenery_health.utils import load_pipeline_config
from greenery_health.validators import PipelineValidator
from logger_config import attach_log_file, setup_logger

logger = logging.getLogger(__name__)

RATE_COLUMNS = ("quantity_pc", "cost_pc")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="greenery", description="Greenery exposure and prescribing pipeline")
    parser.add_argument("verb", choices=["validate", "run", "export", "report"])
    parser.add_argument("--config", default=GREENERY_CONFIG, help="Run configuration YAML")
    parser.add_argument("--stages", default="", help="Comma-separated subset of metrics,targets,prescriptions,stats")
    parser.add_argument("--seed", type=int, default=None, help="Override the bootstrap seed")
    parser.add_argument("--jobs", type=int, default=GREENERY_JOBS, help="Worker processes")
    parser.add_argument("--out", default=GREENERY_OUTPUT_DIR or None, help="Override the output directory")
    parser.add_argument("--column", action="append", default=None,
                        help="export: metric, target share or rate column (repeatable)")
    parser.add_argument("--condition", default="total", help="export: condition for rate columns")
    return parser


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file merged with the command-line overrides"""
    overrides: Dict = {"parameters": {"jobs": args.jobs}}
    if args.seed is not None:
        overrides["parameters"]["seed"] = args.seed
    if args.out:
        overrides["output_dir"] = str(Path(args.out).resolve())
    return load_pipeline_config(Path(args.config), overrides)


def validate(config: PipelineConfig) -> int:
    validator = PipelineValidator()
    report = validator.validate(config)
    path = validator.write_report(report, Path(config.output_dir) / "validation_report.json")
    for issue in report.issues:
        line = f"[{'ERROR' if issue.fatal else 'WARN'}] {issue.check}: {issue.message}"
        (logger.error if issue.fatal else logger.warning)(line)
    logger.info(f"Validation report: {path}")
    return EXIT_OK if report.ok else EXIT_VALIDATION


def run(config: PipelineConfig, stages: List[str]) -> int:
    status = validate(config)
    if status != EXIT_OK:
        return status
    root = logging.getLogger()
    handler = attach_log_file(root, Path(config.output_dir) / "logs" / "run.log")
    try:
        manifest = PipelineRunner(config).run(stages or None)
    finally:
        root.removeHandler(handler)
        handler.close()
    return EXIT_OK if manifest.ok else EXIT_STAGE_FAILURE


def column_values(output_dir: Path, column: str, condition: str) -> Dict[str, Optional[float]]:
    """Per-area values of a metric, target share or condition rate from a finished run"""
    if column in METRIC_COLUMNS:
        frame = pd.read_csv(output_dir / "metrics.csv", dtype={"area_id": str})
    elif column in TREATMENT_COLUMNS:
        frame = pd.read_csv(output_dir / "targets.csv", dtype={"area_id": str})
    elif column in RATE_COLUMNS:
        frame = pd.read_csv(output_dir / "rates.csv", dtype={"area_id": str, "condition": str})
        frame = frame[frame["condition"] == condition]
    else:
        raise ConfigurationError(f"cannot export unknown column '{column}'")
    return {row.area_id: (None if pd.isna(row.value) else float(row.value))
            for row in frame[["area_id", column]].rename(columns={column: "value"}).itertuples(index=False)}


def export(config: PipelineConfig, columns: Optional[List[str]], condition: str) -> int:
    output_dir = Path(config.output_dir)
    areas = read_areas(config.inputs.areas)
    for column in columns or list(TREATMENT_COLUMNS):
        name = f"{column}_{condition}" if column in RATE_COLUMNS else column
        export_choropleth(column_values(output_dir, column, condition), areas, output_dir / "maps" / name, column)
    return EXIT_OK


def report(config: PipelineConfig) -> int:
    output_dir = Path(config.output_dir)
    manifest_path = output_dir / "manifest.json"
    if not manifest_path.exists():
        logger.error(f"No run found in {output_dir}")
        return EXIT_STAGE_FAILURE
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    print("=" * 80)
    print(f"RUN {manifest['config_hash'][:16]}  (version {manifest['software_version']}, seed {manifest['seed']})")
    print("=" * 80)
    for name, record in manifest["stages"].items():
        print(f"  {name:<14} {record['status']:<9} {record['seconds']:8.2f} s")
    for table in ("ate.csv", "reductions.csv"):
        path = output_dir / table
        if path.exists():
            print(f"\n[{table}]")
            print(pd.read_csv(path).to_string(index=False))
    if manifest["warnings"]:
        print(f"\n[WARN] {len(manifest['warnings'])} warnings")
        for warning in manifest["warnings"][:10]:
            print(f"  - {warning}")
    failed = [name for name, record in manifest["stages"].items() if record["status"] == "failed"]
    return EXIT_STAGE_FAILURE if failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logger(level=getattr(logging, GREENERY_LOG_LEVEL, logging.INFO))
    try:
        config = load_config(args)
        if args.verb == "validate":
            return validate(config)
        if args.verb == "run":
            return run(config, [s for s in args.stages.split(",") if s.strip()])
        if args.verb == "export":
            return export(config, args.column, args.condition)
        return report(config)
    except ConfigurationError as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    except GreeneryError as e:
        logger.error(str(e))
        return EXIT_STAGE_FAILURE


if __name__ == "__main__":
    sys.exit(main())

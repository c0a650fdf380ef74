"""
Demo Script - Runs the whole pipeline on a synthetic mini-city
Run this to see the system in action!
"""

import logging
import sys
import tempfile
from pathlib import Path

import pandas as pd

from greenery_health.exporters import export_choropleth
from greenery_health.processors import PipelineRunner
from greenery_health.storage.readers import read_areas
from greenery_health.synthetic import build_mini_city
from greenery_health.utils import load_pipeline_config
from greenery_health.validators import PipelineValidator

# Setup logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)


def print_section(title):
    """Print formatted section header"""
    print("\n" + "=" * 70)
    print(f"  {title}")
    print("=" * 70)


def demo(root: Path) -> int:
    print_section("MINI-CITY FIXTURE")
    config_path = build_mini_city(root, seed=7, bootstrap_samples=100)
    config = load_pipeline_config(config_path)
    print(f"Inputs written under {root}")

    print_section("VALIDATION")
    report = PipelineValidator().validate(config)
    print(f"Errors: {len(report.errors)}  Warnings: {len(report.warnings)}")
    if not report.ok:
        return 1

    print_section("PIPELINE RUN")
    manifest = PipelineRunner(config).run()
    for name, record in manifest.stages.items():
        print(f"  {name:<14} {record.status:<9} {record.seconds:6.2f} s")

    print_section("RERUN (everything cached)")
    rerun = PipelineRunner(config).run()
    print("  " + ", ".join(f"{name}={record.status}" for name, record in rerun.stages.items()))

    out = Path(config.output_dir)
    print_section("GREENERY METRICS (first 5 wards)")
    print(pd.read_csv(out / "metrics.csv").head().to_string(index=False))

    print_section("TREATMENT EFFECTS")
    ate = pd.read_csv(out / "ate.csv")
    print(ate[["treatment", "condition", "ate_mean", "se", "significant"]].to_string(index=False))

    print_section("CHOROPLETH")
    metrics = pd.read_csv(out / "metrics.csv", dtype={"area_id": str})
    _, svg = export_choropleth(dict(zip(metrics["area_id"], metrics["g_onroad_ndvi"])),
                               read_areas(config.inputs.areas), out / "maps" / "g_onroad_ndvi", "g_onroad_ndvi")
    print(f"SVG written to {svg}")
    return 0 if manifest.ok else 2


if __name__ == "__main__":
    with tempfile.TemporaryDirectory(prefix="mini-city-") as tmp:
        sys.exit(demo(Path(tmp)))

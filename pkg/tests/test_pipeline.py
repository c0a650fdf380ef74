"""
End-to-end pipeline tests on generated mini-cities

Covers validation, the staged runner and its cache, choropleth export and
the command-line verbs.
"""

import json
import shutil
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

import greenery_cli
from greenery_health.exporters.choropleth import NO_DATA_FILL, export_choropleth, ramp_color, ramp_positions, standardize
from greenery_health.models.pipeline import Stage
from greenery_health.processors import PipelineRunner, resolve_stages
from greenery_health.synthetic import CITY_ORIGIN
from greenery_health.validators import PipelineValidator
from tests.conftest import build_config, make_area

STAGE_FILES = {
    "metrics": ["choice.csv", "choice.geojson", "metrics.csv", "metrics.geojson"],
    "targets": ["targets.csv"],
    "prescriptions": ["ingestion_report.json", "rates.csv"],
    "stats": ["ate.csv", "ate_balance.csv", "gwr_summary.csv", "reductions.csv"],
}


def published(output_dir: Path) -> dict:
    """Published file name -> bytes, leaving out the manifest and cache"""
    return {
        p.name: p.read_bytes()
        for p in sorted(Path(output_dir).iterdir())
        if p.is_file() and p.name != "manifest.json"
    }


def statuses(manifest) -> dict:
    return {name: record.status for name, record in manifest.stages.items()}


def to_degrees(coordinates):
    """Squeeze a generated city's meter coordinates into a small lon/lat box"""
    if isinstance(coordinates[0], (int, float)):
        x, y = coordinates[:2]
        return [-0.12 + (x - CITY_ORIGIN[0]) * 1e-5, 51.5 + (y - CITY_ORIGIN[1]) * 1e-5]
    return [to_degrees(part) for part in coordinates]


# ---------------------------------------------------------------------------
# Stage planning
# ---------------------------------------------------------------------------

class TestResolveStages:
    def test_all_stages_by_default(self):
        assert resolve_stages() == [Stage.METRICS, Stage.TARGETS, Stage.PRESCRIPTIONS, Stage.STATS]

    def test_stats_pulls_in_its_upstream(self):
        assert resolve_stages(["stats"]) == [Stage.METRICS, Stage.TARGETS, Stage.PRESCRIPTIONS, Stage.STATS]

    def test_independent_stage_alone(self):
        assert resolve_stages(["targets"]) == [Stage.TARGETS]

    def test_unknown_stage(self):
        from greenery_health.exceptions import ConfigurationError

        with pytest.raises(ConfigurationError):
            resolve_stages(["greenness"])


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

class TestValidation:
    def test_generated_city_is_valid(self, city_config):
        _, config = city_config
        report = PipelineValidator().validate(config)
        assert report.ok, [i.message for i in report.errors]

    def test_unknown_patient_area_is_fatal(self, city_config):
        _, config = city_config
        patients = pd.read_csv(config.inputs.patients, dtype={"gp_code": str, "area_id": str})
        extra = pd.DataFrame([{"gp_code": patients["gp_code"].iloc[0], "area_id": "E99999999", "count": 3}])
        pd.concat([patients, extra], ignore_index=True).to_csv(config.inputs.patients, index=False)

        report = PipelineValidator().validate(config)
        assert not report.ok
        issue = next(i for i in report.errors if i.check == "patients")
        assert issue.rows == [len(patients) + 1]

    def test_degree_raster_against_meter_areas(self, city_config, tmp_path):
        _, config = city_config
        grid = tmp_path / "green.asc"
        grid.write_text("ncols 4\nnrows 4\nxllcorner -0.12\nyllcorner 51.5\ncellsize 0.0001\n"
                        + "1 0 1 0\n" * 4, encoding="utf-8")
        config = config.model_copy(update={"inputs": config.inputs.model_copy(update={"green_cover": grid})})

        report = PipelineValidator().validate(config)
        assert "crs" in {i.check for i in report.errors}

    def test_areas_and_cover_in_degrees(self, city_config, tmp_path):
        _, config = city_config
        document = json.loads(Path(config.inputs.areas).read_text(encoding="utf-8"))
        for item in document["features"]:
            item["geometry"]["coordinates"] = to_degrees(item["geometry"]["coordinates"])
        areas = tmp_path / "areas.geojson"
        areas.write_text(json.dumps(document), encoding="utf-8")
        grid = tmp_path / "green.asc"
        grid.write_text("ncols 4\nnrows 4\nxllcorner -0.12\nyllcorner 51.5\ncellsize 0.01\n"
                        + "1 0 1 0\n" * 4, encoding="utf-8")
        inputs = config.inputs.model_copy(update={"areas": areas, "green_cover": grid})

        report = PipelineValidator().validate(config.model_copy(update={"inputs": inputs}))
        crs = [i.message for i in report.errors if i.check == "crs"]
        assert any(message.startswith("areas:") for message in crs)

    def test_missing_file(self, city_config):
        _, config = city_config
        Path(config.inputs.gps).unlink()
        report = PipelineValidator().validate(config)
        assert [i.check for i in report.errors] == ["files"]

    def test_report_document(self, city_config, tmp_path):
        _, config = city_config
        validator = PipelineValidator()
        path = validator.write_report(validator.validate(config), tmp_path / "validation_report.json")
        document = json.loads(path.read_text(encoding="utf-8"))
        assert document["ok"] is True
        assert document["errors"] == []


# ---------------------------------------------------------------------------
# Full runs
# ---------------------------------------------------------------------------

@pytest.mark.slow
class TestFinishedRun:
    def test_every_stage_computed(self, finished_run):
        _, _, manifest = finished_run
        assert manifest.ok
        assert set(statuses(manifest).values()) == {"computed"}

    def test_outputs_published(self, finished_run):
        _, config, manifest = finished_run
        output_dir = Path(config.output_dir)
        for stage, names in STAGE_FILES.items():
            for name in names:
                assert (output_dir / name).is_file(), name
            assert set(names) <= set(manifest.stages[stage].outputs)
        assert not (output_dir / "_warnings.json").exists()
        assert (output_dir / "manifest.json").is_file()

    def test_metric_table(self, finished_run):
        _, config, _ = finished_run
        metrics = pd.read_csv(Path(config.output_dir) / "metrics.csv")
        assert len(metrics) == 36
        for column in ("g_total_ndvi", "g_onroad_ndvi", "g_offroad"):
            assert metrics[column].between(0.0, 1.0).all()
        assert (metrics["g_onroad_ndvi"] <= metrics["g_total_ndvi"] + 1e-12).all()

    def test_targets_and_rates(self, finished_run):
        _, config, _ = finished_run
        output_dir = Path(config.output_dir)
        targets = pd.read_csv(output_dir / "targets.csv").dropna(subset=["who_share"])
        assert (targets["ne_share"] <= targets["who_share"] + 1e-12).all()

        rates = pd.read_csv(output_dir / "rates.csv")
        assert rates["condition"].nunique() == 7
        assert len(rates) == 7 * 36

        report = json.loads((output_dir / "ingestion_report.json").read_text(encoding="utf-8"))
        assert "Y99999" in report["unknown_gp_codes"]
        assert "C00006" in report["excluded_gps"]

    def test_effect_rows(self, finished_run):
        _, config, _ = finished_run
        ate = pd.read_csv(Path(config.output_dir) / "ate.csv")
        assert sorted(zip(ate["treatment"], ate["condition"])) == [
            ("g_onroad_ndvi", "diabetes"), ("g_onroad_ndvi", "total"),
            ("g_total_ndvi", "diabetes"), ("g_total_ndvi", "total"),
        ]
        estimated = ate.dropna(subset=["ate_mean"])
        assert (estimated["ci99_lo"] <= estimated["ci99_hi"]).all()

    def test_rerun_is_cached(self, finished_run):
        _, config, first = finished_run
        before = published(config.output_dir)
        again = PipelineRunner(config).run()
        assert set(statuses(again).values()) == {"cached"}
        assert {k: r.cache_key for k, r in again.stages.items()} == {k: r.cache_key for k, r in first.stages.items()}
        assert published(config.output_dir) == before


@pytest.mark.slow
class TestCache:
    def test_covariate_edit_recomputes_only_stats(self, city_config):
        _, config = city_config
        PipelineRunner(config).run()
        covariates = pd.read_csv(config.inputs.covariates, dtype={"area_id": str})
        covariates.loc[0, "imd_score"] = covariates.loc[0, "imd_score"] + 1.0
        covariates.to_csv(config.inputs.covariates, index=False)

        manifest = PipelineRunner(config).run()
        assert statuses(manifest) == {
            "metrics": "cached", "targets": "cached", "prescriptions": "cached", "stats": "computed",
        }

    def test_identical_inputs_give_identical_bytes(self, tmp_path):
        _, first = build_config(tmp_path / "a")
        _, second = build_config(tmp_path / "b")
        PipelineRunner(first).run()
        manifest = PipelineRunner(second).run()
        assert published(first.output_dir) == published(second.output_dir)

        # a lost cache entry is rebuilt to the same bytes
        shutil.rmtree(PipelineRunner(second).cache.entry("metrics", manifest.stages["metrics"].cache_key))
        rebuilt = PipelineRunner(second).run()
        assert statuses(rebuilt)["metrics"] == "computed"
        assert statuses(rebuilt)["stats"] == "cached"
        assert published(first.output_dir) == published(second.output_dir)

    def test_seed_and_jobs_leave_upstream_cached(self, city_config):
        _, config = city_config
        first = PipelineRunner(config).run(["metrics", "prescriptions"])
        params = config.parameters.model_copy(update={"seed": config.parameters.seed + 1, "jobs": 2})
        second = PipelineRunner(config.model_copy(update={"parameters": params})).run(["metrics", "prescriptions"])
        assert first.stages["metrics"].cache_key == second.stages["metrics"].cache_key
        assert statuses(second) == {"metrics": "cached", "prescriptions": "cached"}

    def test_run_without_street_images(self, city_config):
        _, config = city_config
        params = config.parameters.model_copy(update={
            "treatment_metrics": ["g_onroad_gsv", "g_onroad_ndvi"], "gwr_metrics": ["g_onroad_gsv"],
        })
        inputs = config.inputs.model_copy(update={"images": None})
        manifest = PipelineRunner(config.model_copy(update={"inputs": inputs, "parameters": params})).run()
        assert set(statuses(manifest).values()) == {"computed"}

        output_dir = Path(config.output_dir)
        assert pd.read_csv(output_dir / "metrics.csv")["g_onroad_gsv"].isna().all()
        ate = pd.read_csv(output_dir / "ate.csv")
        gsv = ate[ate["treatment"] == "g_onroad_gsv"]
        assert len(gsv) == 2
        assert gsv["ate_mean"].isna().all()
        assert gsv["note"].str.contains("complete rows").all()
        assert pd.read_csv(output_dir / "gwr_summary.csv").empty

    def test_broken_segments_fail_dependents_only(self, city_config):
        _, config = city_config
        Path(config.inputs.segments).write_text("{not geojson", encoding="utf-8")
        manifest = PipelineRunner(config).run()
        assert statuses(manifest) == {
            "metrics": "failed", "targets": "failed", "prescriptions": "computed", "stats": "skipped",
        }
        assert manifest.failed_stage == "metrics"
        assert not manifest.ok
        assert (Path(config.output_dir) / "rates.csv").is_file()


# ---------------------------------------------------------------------------
# Choropleth export
# ---------------------------------------------------------------------------

@pytest.fixture
def strip():
    return [make_area("A", 0, 0, 10, 10), make_area("B", 10, 0, 20, 10), make_area("C", 20, 0, 30, 10)]


class TestChoropleth:
    def test_standardized_scores(self):
        scores = standardize({"a": 1.0, "b": 2.0, "c": 3.0, "d": None})
        assert scores["a"] == pytest.approx(-np.sqrt(1.5))
        assert scores["b"] == pytest.approx(0.0)
        assert scores["d"] is None
        assert ramp_positions(scores) == {"a": 0.0, "b": pytest.approx(0.5), "c": 1.0, "d": None}

    def test_constant_values_sit_mid_ramp(self):
        scores = standardize({"a": 4.0, "b": 4.0})
        assert scores == {"a": 0.0, "b": 0.0}
        assert ramp_positions(scores) == {"a": 0.5, "b": 0.5}

    def test_extremes_use_ramp_ends(self, strip, tmp_path):
        _, svg = export_choropleth({"A": 0.1, "B": 0.2, "C": 0.9}, strip, tmp_path / "map", "g_total_ndvi")
        text = svg.read_text(encoding="utf-8")
        assert 'id="A" d=' in text
        assert f'fill="{ramp_color(0.0)}"' in text
        assert f'fill="{ramp_color(1.0)}"' in text
        assert ramp_color(0.0) != ramp_color(1.0)

    def test_missing_value_drawn_as_no_data(self, strip, tmp_path):
        geojson, svg = export_choropleth({"A": 0.1, "C": 0.9}, strip, tmp_path / "map.svg", "who_share")
        path_b = next(line for line in svg.read_text(encoding="utf-8").splitlines() if 'id="B"' in line)
        assert f'fill="{NO_DATA_FILL}"' in path_b
        assert 'class="no-data"' in path_b
        features = json.loads(geojson.read_text(encoding="utf-8"))["features"]
        b = next(f for f in features if f["properties"]["area_id"] == "B")
        assert b["properties"]["who_share"] is None
        assert b["properties"]["who_share_z"] is None

    def test_repeated_export_is_byte_identical(self, strip, tmp_path):
        values = {"A": 0.3, "B": 0.1, "C": 0.5}
        first = export_choropleth(values, strip, tmp_path / "one", "g_offroad")
        second = export_choropleth(values, list(reversed(strip)), tmp_path / "two", "g_offroad")
        assert [p.read_bytes() for p in first] == [p.read_bytes() for p in second]


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

class TestCli:
    def test_validate(self, city_config):
        config_path, config = city_config
        assert greenery_cli.main(["validate", "--config", str(config_path)]) == 0
        assert (Path(config.output_dir) / "validation_report.json").is_file()

    def test_invalid_inputs_exit_one(self, city_config):
        config_path, config = city_config
        Path(config.inputs.covariates).unlink()
        assert greenery_cli.main(["validate", "--config", str(config_path)]) == 1

    def test_missing_config_exits_one(self, tmp_path):
        assert greenery_cli.main(["validate", "--config", str(tmp_path / "absent.yaml")]) == 1

    def test_report_without_run(self, city_config, tmp_path):
        config_path, _ = city_config
        assert greenery_cli.main(["report", "--config", str(config_path), "--out", str(tmp_path / "empty")]) == 2

    @pytest.mark.slow
    def test_run_export_report(self, city_config, tmp_path, capsys):
        config_path, _ = city_config
        out = tmp_path / "cli-out"
        common = ["--config", str(config_path), "--out", str(out)]
        assert greenery_cli.main(["run", "--stages", "metrics,targets", *common]) == 0
        assert (out / "metrics.csv").is_file()
        assert not (out / "rates.csv").exists()
        assert "metrics" in (out / "logs" / "run.log").read_text(encoding="utf-8")

        assert greenery_cli.main(["export", "--column", "g_total_ndvi", "--column", "ne_share", *common]) == 0
        assert (out / "maps" / "g_total_ndvi.svg").is_file()
        assert (out / "maps" / "ne_share.geojson").is_file()
        assert greenery_cli.main(["export", "--column", "greenness", *common]) == 1

        assert greenery_cli.main(["report", *common]) == 0
        assert "metrics" in capsys.readouterr().out

    def test_stage_failure_exits_two(self, city_config, monkeypatch):
        config_path, _ = city_config

        class FailingRunner:
            def __init__(self, config):
                self.config = config

            def run(self, stages=None):
                return SimpleNamespace(ok=False)

        monkeypatch.setattr(greenery_cli, "PipelineRunner", FailingRunner)
        assert greenery_cli.main(["run", "--config", str(config_path)]) == 2

"""
Pipeline Validator
Schema checks on every input and cross-checks between inputs
"""

import logging
from pathlib import Path
from typing import Callable, List, Optional, TypeVar

from ..core.geometry import bounds_overlap, check_same_crs, require_projected, union_bounds
from ..exceptions import ConfigurationError, GreeneryError, IngestionError
from ..models.geo import AreaUnit
from ..models.pipeline import PipelineConfig, ValidationReport
from ..models.prescriptions import Condition
from ..storage.readers import (
    DRUG_SCHEMA,
    GP_SCHEMA,
    PATIENT_SCHEMA,
    months_expected,
    read_areas,
    read_condition_lists,
    read_covariates,
    read_green_cover,
    read_images,
    read_parks,
    read_population_grid,
    read_prescriptions,
    read_segments,
    read_table,
)
from ..storage.writers import write_json

logger = logging.getLogger(__name__)

T = TypeVar("T")


class PipelineValidator:
    """Validates a pipeline configuration's inputs before a run"""

    def validate(self, config: PipelineConfig) -> ValidationReport:
        """
        Run every check and collect fatal errors and warnings

        Args:
            config: Parsed pipeline configuration

        Returns:
            ValidationReport; `ok` is False when any fatal check failed
        """
        logger.info(f"Validating inputs of {config.source or 'in-memory config'}")
        report = ValidationReport()

        if not self._validate_files(config, report):
            logger.info(f"Validation stopped early. Errors: {len(report.errors)}")
            return report
        areas = self._check(report, "areas", lambda: read_areas(config.inputs.areas)) or []
        self._validate_geometry(config, areas, report)
        self._validate_tables(config, areas, report)

        logger.info(f"Validation complete. Errors: {len(report.errors)}, Warnings: {len(report.warnings)}")
        return report

    def write_report(self, report: ValidationReport, path: Path) -> Path:
        """validation_report.json with ok, errors and warnings"""
        document = {
            "ok": report.ok,
            "errors": [i.model_dump() for i in report.errors],
            "warnings": [i.model_dump() for i in report.warnings],
        }
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return write_json(document, path)

    def _check(self, report: ValidationReport, check: str, load: Callable[[], T]) -> Optional[T]:
        """Run a loader; parse failures become fatal issues with their row numbers"""
        try:
            return load()
        except IngestionError as exc:
            report.add(check, str(exc), fatal=True, rows=exc.rows)
        except (GreeneryError, ValueError, KeyError, OSError) as exc:
            report.add(check, str(exc), fatal=True)
        return None

    def _validate_files(self, config: PipelineConfig, report: ValidationReport) -> bool:
        for name, path in config.inputs.all_files().items():
            if not Path(path).is_file():
                report.add("files", f"{name}: {path} does not exist", fatal=True)
        return report.ok

    def _validate_geometry(self, config: PipelineConfig, areas: List[AreaUnit], report: ValidationReport):
        inputs, params = config.inputs, config.parameters
        segments = self._check(report, "segments", lambda: read_segments(inputs.segments))
        self._check(report, "parks", lambda: read_parks(inputs.parks))
        self._check(report, "images", lambda: read_images(inputs.images))
        self._check(report, "population_grid", lambda: read_population_grid(inputs.population_grid, params.grid_cell_size))
        if not areas:
            return

        extent = union_bounds(a.boundary.bounds for a in areas)
        self._check_projected(report, "areas", extent)
        if segments:
            self._check_projected(report, "segments", union_bounds(s.geometry.bounds for s in segments))
        raster = self._check(report, "green_cover",
                             lambda: read_green_cover(inputs.green_cover, params.cover_cell_size, extent))
        if raster is not None:
            try:
                check_same_crs(raster.bounds, extent, "green cover vs areas")
            except ConfigurationError as exc:
                report.add("crs", str(exc), fatal=True)
            else:
                if not bounds_overlap(raster.bounds, extent):
                    report.add("extent", "green cover does not overlap the areas", fatal=True)
        if segments:
            segment_extent = union_bounds(s.geometry.bounds for s in segments)
            if raster is not None and not bounds_overlap(raster.bounds, segment_extent):
                report.add("extent", "street segments do not overlap the green cover extent", fatal=True)
            ids = [s.id for s in segments]
            if len(set(ids)) != len(ids):
                report.add("segments", "duplicate segment ids", fatal=True)

    def _check_projected(self, report: ValidationReport, label: str, extent):
        try:
            require_projected(extent, label)
        except ConfigurationError as exc:
            report.add("crs", str(exc), fatal=True)

    def _validate_tables(self, config: PipelineConfig, areas: List[AreaUnit], report: ValidationReport):
        inputs, params = config.inputs, config.parameters
        area_ids = {a.id for a in areas}

        self._check(report, "prescriptions", lambda: read_prescriptions(inputs.prescriptions))
        missing_months = [m for m in months_expected(params.prescription_year) if m not in inputs.prescriptions]
        if missing_months:
            report.add("prescriptions", f"months missing: {', '.join(missing_months)}", fatal=False)
        if inputs.drugs is not None:
            self._check(report, "drugs", lambda: read_table(inputs.drugs, DRUG_SCHEMA, "drugs"))

        gps = self._check(report, "gps", lambda: read_table(inputs.gps, GP_SCHEMA, "gps"))
        patients = self._check(report, "patients", lambda: read_table(inputs.patients, PATIENT_SCHEMA, "patients"))
        if patients is not None and area_ids:
            unknown = ~patients["area_id"].isin(area_ids)
            if unknown.any():
                rows = [int(i) + 1 for i in patients.index[unknown]]
                codes = sorted(patients.loc[unknown, "area_id"].unique())
                report.add("patients", f"patients reference unknown areas {codes[:10]}", fatal=True, rows=rows)
        if patients is not None and gps is not None:
            strays = sorted(set(patients["gp_code"]) - set(gps["gp_code"]))
            if strays:
                report.add("patients", f"patients listed under unknown practices {strays[:10]}", fatal=False)

        lists = self._check(report, "condition_lists", lambda: read_condition_lists(inputs.condition_lists))
        if lists is not None:
            absent = [c for c in params.outcome_conditions if c not in lists and c != Condition.TOTAL.value]
            if absent:
                report.add("condition_lists", f"no BNF list for outcome conditions {absent}", fatal=False)

        covariates = self._check(report, "covariates", lambda: read_covariates(inputs.covariates))
        if covariates is not None and area_ids:
            stray = sorted(set(covariates["area_id"]) - area_ids)
            if stray:
                report.add("covariates", f"covariates for unknown areas {stray[:10]}", fatal=False)
            uncovered = sorted(area_ids - set(covariates["area_id"]))
            if uncovered:
                report.add("covariates", f"{len(uncovered)} areas have no covariates and drop out of the statistics",
                           fatal=False)
            absent = [c for c in params.confounders if c not in covariates.columns]
            if absent:
                report.add("covariates", f"confounders {absent} are not covariate columns", fatal=True)
                return
            gaps = covariates[params.confounders].isna().any(axis=1)
            if gaps.any():
                report.add("covariates", f"{int(gaps.sum())} areas have missing confounder values", fatal=False,
                           rows=[int(i) + 1 for i in covariates.index[gaps]])

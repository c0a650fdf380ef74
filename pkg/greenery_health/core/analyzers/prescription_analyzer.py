"""
Prescription Analyzer
Prescriptions stage: ingestion, quarantine and per-capita rates per area and condition
"""

from pathlib import Path
from typing import Dict, List, Mapping, Tuple

import pandas as pd

from ...models.prescriptions import GpPractice, IngestionReport
from ...storage.readers import (
    DRUG_SCHEMA,
    GP_SCHEMA,
    PATIENT_SCHEMA,
    months_expected,
    read_areas,
    read_condition_lists,
    read_prescriptions,
    read_table,
)
from ..prescriptions import (
    check_patient_areas,
    compute_rates,
    conditions_in_order,
    drug_names_matched,
    gp_practices,
    match_condition,
    patient_population_correlation,
    patients_in_area,
    rates_frame,
)
from .base_analyzer import BaseAnalyzer, StageOutput


class PrescriptionAnalyzer(BaseAnalyzer):
    """
    Apportions practice-level prescribing to areas through patient residence

    Outputs: rates.csv, ingestion_report.json
    """

    stage = "prescriptions"
    parameter_keys = ("prescription_year", "excluded_gp_statuses")
    input_keys = ("areas", "prescriptions", "drugs", "gps", "patients", "condition_lists")

    def analyze(self, upstream: Mapping[str, Path]) -> StageOutput:
        inputs = self.config.inputs
        report = IngestionReport()

        self.logger.info("Step 1: Loading practices, patients and condition lists")
        areas = sorted(read_areas(inputs.areas), key=lambda a: a.id)
        area_ids = [a.id for a in areas]
        gps_df = read_table(inputs.gps, GP_SCHEMA, "gps")
        patients_df = read_table(inputs.patients, PATIENT_SCHEMA, "patients")
        check_patient_areas(patients_df, area_ids)
        drugs = read_table(inputs.drugs, DRUG_SCHEMA, "drugs") if inputs.drugs else None
        condition_lists = conditions_in_order(read_condition_lists(inputs.condition_lists))

        self.logger.info("Step 2: Loading monthly prescribing files")
        rows = read_prescriptions(inputs.prescriptions)
        report.rows_read = int(len(rows))
        report.months_present = sorted(inputs.prescriptions)
        report.months_missing = [m for m in months_expected(self.params.prescription_year)
                                 if m not in inputs.prescriptions]
        if report.months_missing:
            self.warn(f"Prescribing months missing: {', '.join(report.months_missing)}")

        self.logger.info("Step 3: Quarantining rows of unknown or excluded practices")
        practices, rows = self.quarantine(gp_practices(gps_df, patients_df), rows, report)
        report.rows_used = int(len(rows))

        self.logger.info(f"Step 4: Per-capita rates for {len(condition_lists)} conditions")
        rates = compute_rates(rows, condition_lists, practices, area_ids)
        for condition_list in condition_lists:
            name = condition_list.condition.value
            report.matched_rows_by_condition[name] = int(match_condition(rows["bnf_code"], condition_list).notna().sum())
            report.matched_drugs_by_condition[name] = drug_names_matched(drugs, condition_list)

        patients = {a: patients_in_area(practices, a) for a in area_ids}
        for area_id, count in patients.items():
            if count <= 0:
                self.warn(f"Area {area_id}: no registered patients; rates missing")
        report.patients_population_correlation = patient_population_correlation(
            patients, {a.id: a.population for a in areas if a.population > 0}
        )
        report.warnings = list(self.warnings)

        output = StageOutput(warnings=self.warnings)
        output.tables["rates.csv"] = rates_frame(rates)
        output.documents["ingestion_report.json"] = report.model_dump(mode="json")
        self.log_analysis(output)
        return output

    def quarantine(self, practices: Dict[str, GpPractice], rows: pd.DataFrame,
                   report: IngestionReport) -> Tuple[List[GpPractice], pd.DataFrame]:
        """
        Drop practices with an excluded status or no patients, and set aside
        prescribing rows whose practice is unknown or excluded

        Returns:
            Tuple of (kept practices, kept rows)
        """
        excluded_statuses = {s.strip().lower() for s in self.params.excluded_gp_statuses}
        kept, excluded = [], []
        for code in sorted(practices):
            gp = practices[code]
            if gp.status in excluded_statuses or gp.n_patients <= 0:
                excluded.append(code)
            else:
                kept.append(gp)
        report.excluded_gps = excluded

        codes = rows["gp_code"].astype(str)
        unknown = ~codes.isin(practices.keys())
        dropped = codes.isin(excluded)
        report.quarantined_unknown_gp = int(unknown.sum())
        report.quarantined_excluded_status = int(dropped.sum())
        report.unknown_gp_codes = sorted(codes[unknown].unique())
        if unknown.any():
            self.warn(f"Quarantined {int(unknown.sum())} rows from {len(report.unknown_gp_codes)} unknown practices")
        if dropped.any():
            self.warn(f"Quarantined {int(dropped.sum())} rows from {len(excluded)} excluded practices")
        return kept, rows.loc[~unknown & ~dropped].reset_index(drop=True)

"""
Stats Analyzer
Stats stage: PSM treatment effects, prescription reductions and GWR surfaces
"""

from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from ...exceptions import ModelError, StageFailure
from ...models.geo import REQUIRED_COVARIATES
from ...models.pipeline import Stage
from ...models.prescriptions import AreaPrescriptionRate, Condition
from ...models.stats import AteResult, DesignMatrix, GwrResult
from ...storage.readers import read_areas, read_covariates
from ...storage.writers import feature
from ..design import binarize_treatment, build_design_matrix
from ..gwr import gwr_fit
from ..prescriptions import fractional_effect, reduction_projection
from ..psm import psm_ate
from .base_analyzer import BaseAnalyzer, StageOutput

ATE_COLUMNS = [
    "treatment", "condition", "n_areas", "ate_mean", "se", "ci99_lo", "ci99_hi", "significant",
    "ate_percent", "ate_full_sample", "matched_pairs", "redrawn_resamples", "note",
]
BALANCE_COLUMNS = ["treatment", "condition", "covariate", "smd_before", "smd_after"]
REDUCTION_COLUMNS = [
    "treatment", "condition", "ate_mean", "significant", "fractional_effect", "control_areas",
    "quantity_change", "cost_change",
]
GWR_SUMMARY_COLUMNS = [
    "metric", "condition", "n_areas", "bandwidth", "kernel", "aicc", "ols_aicc", "trace_s",
    "failures", "beta_median", "beta_min", "beta_max",
]
OUTCOME_MEASURE = "quantity_pc"


class StatsAnalyzer(BaseAnalyzer):
    """
    Joins the upstream tables with covariates and runs the statistics

    Outputs: ate.csv, ate_balance.csv, reductions.csv, gwr_summary.csv and
    one gwr_<metric>_<condition>.geojson per fitted surface
    """

    stage = "stats"
    parameter_keys = (
        "bootstrap_samples", "seed", "caliper", "min_matched_pairs", "confounders",
        "treatment_metrics", "outcome_conditions", "gwr_metrics", "gwr_bandwidth", "reduction_metric",
    )
    input_keys = ("areas", "covariates")

    def analyze(self, upstream: Mapping[str, Path]) -> StageOutput:
        self.logger.info("Step 1: Joining greenery, targets, rates and covariates")
        areas = sorted(read_areas(self.config.inputs.areas), key=lambda a: a.id)
        frame = self.area_frame(upstream, areas)
        rates = _read_csv(upstream[Stage.PRESCRIPTIONS.value] / "rates.csv")
        conditions = self.available_conditions(rates)

        output = StageOutput(warnings=self.warnings)
        ate_rows: List[dict] = []
        balance_rows: List[dict] = []
        effects: Dict[tuple, AteResult] = {}

        self.logger.info(f"Step 2: PSM effects for {len(self.params.treatment_metrics)} metrics, {len(conditions)} conditions")
        for metric in self.params.treatment_metrics:
            for condition in conditions:
                joined = _with_outcome(frame, rates, condition)
                result, n_areas, note = self.treatment_effect(joined, metric, condition)
                ate_rows.append(_ate_row(metric, condition, result, n_areas, note))
                if result is not None:
                    effects[(metric, condition)] = result
                    for covariate, (before, after) in sorted(result.balance.items()):
                        balance_rows.append({"treatment": metric, "condition": condition, "covariate": covariate,
                                             "smd_before": before, "smd_after": after})

        self.logger.info(f"Step 3: Prescription change projections for {self.params.reduction_metric}")
        reduction_rows = [
            self.reduction(frame, rates, condition, effects.get((self.params.reduction_metric, condition)))
            for condition in conditions
        ]

        self.logger.info("Step 4: Geographically weighted regressions")
        summary_rows: List[dict] = []
        for metric in self.params.gwr_metrics:
            for condition in conditions:
                fit = self.local_regression(_with_outcome(frame, rates, condition), metric, condition)
                if fit is None:
                    continue
                output.geojson[f"gwr_{metric}_{condition}.geojson"] = gwr_features(areas, fit)
                summary_rows.append(_gwr_row(metric, condition, fit))

        output.tables["ate.csv"] = pd.DataFrame(ate_rows, columns=ATE_COLUMNS)
        output.tables["ate_balance.csv"] = pd.DataFrame(balance_rows, columns=BALANCE_COLUMNS)
        output.tables["reductions.csv"] = pd.DataFrame(reduction_rows, columns=REDUCTION_COLUMNS)
        output.tables["gwr_summary.csv"] = pd.DataFrame(summary_rows, columns=GWR_SUMMARY_COLUMNS)
        self.log_analysis(output)
        return output

    def area_frame(self, upstream: Mapping[str, Path], areas) -> pd.DataFrame:
        """One row per area: metrics, target shares, covariates and centroid x/y"""
        required = [s.value for s in (Stage.METRICS, Stage.TARGETS, Stage.PRESCRIPTIONS)]
        is_valid, missing = self.validate_input(upstream, required)
        if not is_valid:
            raise StageFailure(self.stage, ModelError(f"upstream outputs missing: {missing}"))

        base = pd.DataFrame({
            "area_id": [a.id for a in areas],
            "x": [a.boundary.centroid.x for a in areas],
            "y": [a.boundary.centroid.y for a in areas],
        })
        metrics = _read_csv(upstream[Stage.METRICS.value] / "metrics.csv").drop(columns=["warnings"], errors="ignore")
        targets = _read_csv(upstream[Stage.TARGETS.value] / "targets.csv").drop(columns=["population"], errors="ignore")
        covariates = read_covariates(self.config.inputs.covariates)
        unknown = [c for c in self.params.confounders if c not in covariates.columns]
        if unknown:
            raise StageFailure(self.stage, ModelError(f"confounders missing from covariates: {unknown}"))
        keep = ["area_id", *dict.fromkeys([*REQUIRED_COVARIATES, *self.params.confounders])]
        frame = (
            base.merge(metrics, on="area_id", how="left")
            .merge(targets, on="area_id", how="left")
            .merge(covariates[keep], on="area_id", how="left")
        )
        return frame.sort_values("area_id", kind="mergesort").reset_index(drop=True)

    def available_conditions(self, rates: pd.DataFrame) -> List[str]:
        present = set(rates["condition"].astype(str))
        order = [c.value for c in Condition]
        wanted = sorted(self.params.outcome_conditions, key=lambda c: order.index(c) if c in order else len(order))
        missing = [c for c in wanted if c not in present]
        if missing:
            self.warn(f"No prescription rates for conditions {missing}; skipped")
        return [c for c in wanted if c in present]

    def treatment_effect(self, joined: pd.DataFrame, metric: str, condition: str):
        """PSM ATE of the above-median split of `metric` on the normalised rate"""
        params = self.params
        label = f"{metric} -> {condition}"
        treatment = binarize_treatment(joined[metric])
        usable = joined.loc[treatment.notna().to_numpy()].copy()
        usable["treated"] = treatment.dropna().astype(bool).to_numpy()
        try:
            data = build_design_matrix(usable, "outcome", params.confounders)
            flags = usable.set_index("area_id").loc[list(data.area_ids), "treated"].to_numpy(dtype=bool)
            result = psm_ate(data, flags, B=params.bootstrap_samples, seed=params.seed, caliper=params.caliper,
                             min_pairs=params.min_matched_pairs, jobs=params.jobs, treatment_name=metric)
        except ModelError as exc:
            self.warn(f"{label}: {exc}")
            return None, int(len(usable)), str(exc)
        if result.redrawn_resamples:
            self.warnings.append(f"{label}: {result.redrawn_resamples} bootstrap resamples redrawn")
        return result, data.n, ""

    def reduction(self, frame: pd.DataFrame, rates: pd.DataFrame, condition: str,
                  effect: Optional[AteResult]) -> dict:
        """Projected change in prescriptions if the control areas received the effect"""
        metric = self.params.reduction_metric
        subset = rates[rates["condition"] == condition]
        records = [
            AreaPrescriptionRate(
                area_id=row.area_id,
                condition=Condition(condition),
                quantity_per_capita=None if pd.isna(row.quantity_pc) else row.quantity_pc,
                cost_per_capita=None if pd.isna(row.cost_pc) else row.cost_pc,
                quantity_total=row.quantity_total,
                cost_total=row.cost_total,
                patients=row.patients,
            )
            for row in subset.itertuples(index=False)
        ]
        treatment = binarize_treatment(frame.set_index("area_id")[metric])
        flags = {area_id: (None if pd.isna(flag) else bool(flag)) for area_id, flag in treatment.items()}
        ate = effect.ate_mean if effect is not None else 0.0
        effect_fraction = fractional_effect(ate, [r.quantity_per_capita for r in records])
        change = reduction_projection(records, flags, effect_fraction)
        return {
            "treatment": metric,
            "condition": condition,
            "ate_mean": effect.ate_mean if effect is not None else None,
            "significant": effect.significant if effect is not None else None,
            "fractional_effect": effect_fraction,
            "control_areas": sum(1 for r in records if flags.get(r.area_id) is False),
            "quantity_change": change.quantity,
            "cost_change": change.cost,
        }

    def local_regression(self, joined: pd.DataFrame, metric: str, condition: str) -> Optional[GwrResult]:
        """GWR of the normalised rate on the metric and the confounders"""
        try:
            data: DesignMatrix = build_design_matrix(joined, "outcome", [metric, *self.params.confounders])
            return gwr_fit(data, bandwidth=self.params.gwr_bandwidth)
        except ModelError as exc:
            self.warn(f"GWR {metric} -> {condition}: {exc}")
            return None


def _read_csv(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, dtype={"area_id": str, "condition": str})


def _with_outcome(frame: pd.DataFrame, rates: pd.DataFrame, condition: str) -> pd.DataFrame:
    outcome = rates.loc[rates["condition"] == condition, ["area_id", OUTCOME_MEASURE]]
    return frame.merge(outcome.rename(columns={OUTCOME_MEASURE: "outcome"}), on="area_id", how="left")


def _ate_row(metric: str, condition: str, result: Optional[AteResult], n_areas: int, note: str) -> dict:
    row = {"treatment": metric, "condition": condition, "n_areas": n_areas, "note": note}
    if result is not None:
        row.update(
            ate_mean=result.ate_mean,
            se=result.se,
            ci99_lo=result.ci99[0],
            ci99_hi=result.ci99[1],
            significant=result.significant,
            ate_percent=result.ate_percent,
            ate_full_sample=result.ate_full_sample,
            matched_pairs=result.matched_pairs_full_sample,
            redrawn_resamples=result.redrawn_resamples,
        )
    return row


def _gwr_row(metric: str, condition: str, fit: GwrResult) -> dict:
    column = fit.params[:, fit.predictors.index(metric)]
    present = column[~np.isnan(column)]
    return {
        "metric": metric,
        "condition": condition,
        "n_areas": len(fit.area_ids),
        "bandwidth": fit.bandwidth,
        "kernel": fit.kernel,
        "aicc": fit.aicc,
        "ols_aicc": fit.ols_aicc,
        "trace_s": fit.trace_s,
        "failures": len(fit.failures),
        "beta_median": float(np.median(present)) if present.size else None,
        "beta_min": float(present.min()) if present.size else None,
        "beta_max": float(present.max()) if present.size else None,
    }


def gwr_features(areas, fit: GwrResult) -> List[dict]:
    """Local coefficients, standard errors and fit diagnostics per area"""
    coefficients = fit.coefficient_frame()
    coefficients["fitted"] = fit.fitted
    coefficients["residual"] = fit.residuals
    by_id = coefficients.set_index("area_id")
    features = []
    for area in areas:
        if area.id not in by_id.index:
            continue
        properties = {"area_id": area.id, **by_id.loc[area.id].to_dict()}
        features.append(feature(area.boundary, properties, area.id))
    return features

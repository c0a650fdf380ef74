"""
Prescription Apportionment
Per-area prescription totals and per-capita rates from practice-level records
"""

import logging
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..exceptions import IngestionError
from ..models.geo import AreaUnit
from ..models.prescriptions import (
    AreaPrescriptionRate,
    Condition,
    ConditionList,
    GpPractice,
    PrescriptionRow,
)

logger = logging.getLogger(__name__)

PRESCRIPTION_COLUMNS = list(PrescriptionRow.COLUMNS)


class ConditionTotal(NamedTuple):
    quantity: float
    cost: float


class ReductionEstimate(NamedTuple):
    quantity: float
    cost: float


def _area_id(area: Union[AreaUnit, str]) -> str:
    return area.id if isinstance(area, AreaUnit) else str(area)


def rows_frame(rows: Union[pd.DataFrame, Iterable[PrescriptionRow]]) -> pd.DataFrame:
    """Prescription rows as a DataFrame with the standard columns"""
    if isinstance(rows, pd.DataFrame):
        return rows
    records = [(r.gp_code, r.bnf_code, r.items, r.quantity, r.cost) for r in rows]
    return pd.DataFrame.from_records(records, columns=PRESCRIPTION_COLUMNS)


def check_patient_areas(patients: pd.DataFrame, area_ids: Iterable[str]):
    """
    Raises:
        IngestionError: Listing the 1-based rows whose area_id is unknown
    """
    known = set(area_ids)
    unknown = ~patients["area_id"].astype(str).isin(known)
    if unknown.any():
        rows = (np.flatnonzero(unknown.to_numpy()) + 1).tolist()
        codes = sorted(patients.loc[unknown, "area_id"].astype(str).unique())
        raise IngestionError(f"patients table references unknown areas {codes[:10]}", rows)


def patients_in_area(gps: Sequence[GpPractice], area: Union[AreaUnit, str]) -> float:
    """n_pat(a): registered patients living in the area, over all practices"""
    area_id = _area_id(area)
    return float(sum(gp.patients_by_area.get(area_id, 0.0) for gp in gps))


def gp_fraction(gp: GpPractice, area: Union[AreaUnit, str]) -> Optional[float]:
    """
    f(gp, a): share of a practice's patients living in the area

    Returns:
        Fraction in [0, 1], or None (with a warning) for a practice without patients
    """
    total = gp.n_patients
    if total <= 0:
        logger.warning(f"GP {gp.gp_code} has no registered patients; excluded")
        return None
    return gp.patients_by_area.get(_area_id(area), 0.0) / total


def fraction_table(gps: Sequence[GpPractice]) -> pd.DataFrame:
    """
    Long table (gp_code, area_id, fraction) with f > 0, sorted by gp_code then area_id

    Practices without patients are dropped with a warning.
    """
    records = []
    for gp in sorted(gps, key=lambda g: g.gp_code):
        total = gp.n_patients
        if total <= 0:
            logger.warning(f"GP {gp.gp_code} has no registered patients; excluded")
            continue
        for area_id in sorted(gp.patients_by_area):
            count = gp.patients_by_area[area_id]
            if count > 0:
                records.append((gp.gp_code, area_id, count / total))
    return pd.DataFrame.from_records(records, columns=["gp_code", "area_id", "fraction"])


def match_condition(bnf_codes: pd.Series, condition_list: ConditionList) -> pd.Series:
    """Matched prefix per row ('' for the total list), NaN where nothing matches"""
    unique = bnf_codes.astype(str).unique()
    lookup = {code: condition_list.longest_prefix(code) for code in unique}
    return bnf_codes.astype(str).map(lookup)


def gp_condition_totals(rows: Union[pd.DataFrame, Iterable[PrescriptionRow]],
                        condition_list: ConditionList) -> pd.DataFrame:
    """N_c(gp): quantity and cost of matching rows summed per practice"""
    frame = rows_frame(rows)
    matched = frame[match_condition(frame["bnf_code"], condition_list).notna()]
    # fixed summation order whatever the input row order
    matched = matched.sort_values(["gp_code", "bnf_code", "quantity", "cost"], kind="mergesort")
    totals = matched.groupby("gp_code", sort=True)[["quantity", "cost"]].sum()
    return totals.reset_index()


def area_condition_totals(rows: Union[pd.DataFrame, Iterable[PrescriptionRow]], condition_list: ConditionList,
                          fractions: pd.DataFrame) -> pd.DataFrame:
    """
    N_c(a) for every area any practice serves

    The sum runs over all practices with f(gp, a) > 0, not only practices
    located inside the area.
    """
    per_gp = gp_condition_totals(rows, condition_list)
    merged = fractions.merge(per_gp, on="gp_code", how="inner")
    merged["quantity"] = merged["quantity"] * merged["fraction"]
    merged["cost"] = merged["cost"] * merged["fraction"]
    return merged.groupby("area_id", sort=True)[["quantity", "cost"]].sum().reset_index()


def condition_count(rows: Union[pd.DataFrame, Iterable[PrescriptionRow]], condition_list: ConditionList,
                    gps: Sequence[GpPractice], area: Union[AreaUnit, str]) -> ConditionTotal:
    """
    Apportioned quantity and cost of one condition's prescriptions in one area

    Rows from practices not in `gps` are ignored here; ingestion quarantines them.
    """
    area_id = _area_id(area)
    fractions = fraction_table(gps)
    totals = area_condition_totals(rows, condition_list, fractions)
    hit = totals[totals["area_id"] == area_id]
    if hit.empty:
        return ConditionTotal(0.0, 0.0)
    return ConditionTotal(float(hit["quantity"].iloc[0]), float(hit["cost"].iloc[0]))


def per_capita(area_total: float, patients: float) -> Optional[float]:
    """Total over patients; None when there are no patients"""
    if patients is None or patients <= 0:
        return None
    return area_total / patients


def compute_rates(rows: Union[pd.DataFrame, Iterable[PrescriptionRow]], condition_lists: Sequence[ConditionList],
                  gps: Sequence[GpPractice], area_ids: Sequence[str]) -> List[AreaPrescriptionRate]:
    """
    Per-capita quantity and cost for every (area, condition) pair

    Conditions are processed in list order, areas in `area_ids` order.
    """
    frame = rows_frame(rows)
    fractions = fraction_table(gps)
    patients = {area_id: patients_in_area(gps, area_id) for area_id in area_ids}
    rates = []
    for condition_list in condition_lists:
        totals = area_condition_totals(frame, condition_list, fractions).set_index("area_id")
        for area_id in area_ids:
            quantity = float(totals.at[area_id, "quantity"]) if area_id in totals.index else 0.0
            cost = float(totals.at[area_id, "cost"]) if area_id in totals.index else 0.0
            rates.append(AreaPrescriptionRate(
                area_id=area_id,
                condition=condition_list.condition,
                quantity_per_capita=per_capita(quantity, patients[area_id]),
                cost_per_capita=per_capita(cost, patients[area_id]),
                quantity_total=quantity,
                cost_total=cost,
                patients=patients[area_id],
            ))
    missing = [a for a, n in patients.items() if n <= 0]
    if missing:
        logger.warning(f"{len(missing)} areas have no registered patients; their rates are missing")
    return rates


def rates_frame(rates: Sequence[AreaPrescriptionRate]) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "area_id": r.area_id,
            "condition": r.condition.value,
            "quantity_pc": r.quantity_per_capita,
            "cost_pc": r.cost_per_capita,
            "quantity_total": r.quantity_total,
            "cost_total": r.cost_total,
            "patients": r.patients,
        }
        for r in rates
    ], columns=["area_id", "condition", "quantity_pc", "cost_pc", "quantity_total", "cost_total", "patients"])


def fractional_effect(ate: float, per_capita_rates: Sequence[Optional[float]]) -> float:
    """
    Convert an ATE on min-max normalised rates into a fraction of the mean rate

    ATE·(max − min)/mean over non-missing rates; 0 when the mean is 0.
    """
    values = np.array([v for v in per_capita_rates if v is not None and not np.isnan(v)], dtype=float)
    if values.size == 0 or values.mean() == 0:
        return 0.0
    return float(ate * (values.max() - values.min()) / values.mean())


def reduction_projection(rates: Sequence[AreaPrescriptionRate], treatment_flags: Mapping[str, Optional[bool]],
                         ate: float) -> ReductionEstimate:
    """
    Projected change if every control area received the treatment effect

    R = Σ over control areas (flag False) of the area total × ATE, for
    quantity and cost. Areas without a flag are not in either group.
    """
    control = [r for r in rates if treatment_flags.get(r.area_id) is False]
    if not control:
        logger.warning("Reduction projection has an empty control group; returning 0")
        return ReductionEstimate(0.0, 0.0)
    quantity = sum(r.quantity_total for r in control) * ate
    cost = sum(r.cost_total for r in control) * ate
    return ReductionEstimate(float(quantity), float(cost))


def conditions_in_order(condition_lists: Mapping[str, ConditionList]) -> List[ConditionList]:
    """Condition lists ordered as the Condition enum"""
    order = {c.value: i for i, c in enumerate(Condition)}
    return [condition_lists[name] for name in sorted(condition_lists, key=lambda n: order.get(n, len(order)))]


def drug_names_matched(drugs: pd.DataFrame, condition_list: ConditionList) -> List[str]:
    """Sorted names of drugs table entries whose BNF code falls under the list"""
    if drugs is None or drugs.empty or condition_list.condition == Condition.TOTAL:
        return []
    hits = match_condition(drugs["bnf_code"], condition_list).notna()
    return sorted(drugs.loc[hits, "name"].astype(str).unique())


def patient_population_correlation(patients: Mapping[str, float], population: Mapping[str, float]) -> Optional[float]:
    """Pearson r between apportioned patients and area population; None if undefined"""
    keys = sorted(set(patients) & set(population))
    if len(keys) < 3:
        return None
    a = pd.Series([patients[k] for k in keys], dtype=float)
    b = pd.Series([population[k] for k in keys], dtype=float)
    if a.std() == 0 or b.std() == 0:
        return None
    return float(a.corr(b))


def gp_practices(gps: pd.DataFrame, patients: pd.DataFrame) -> Dict[str, GpPractice]:
    """Build GpPractice records from the GP and patient tables"""
    counts: Dict[str, Dict[str, float]] = {}
    for gp_code, area_id, count in patients[["gp_code", "area_id", "count"]].itertuples(index=False):
        per_area = counts.setdefault(str(gp_code), {})
        per_area[str(area_id)] = per_area.get(str(area_id), 0.0) + float(count)
    practices = {}
    for gp_code, x, y, status in gps[["gp_code", "x", "y", "status"]].itertuples(index=False):
        code = str(gp_code)
        practices[code] = GpPractice(code, (float(x), float(y)), counts.get(code, {}), str(status).strip().lower())
    return practices

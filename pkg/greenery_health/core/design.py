"""
Design Matrix Construction
Outcome normalisation, treatment binarisation and complete-case assembly
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..exceptions import ModelError
from ..models.stats import DesignMatrix, MinMaxScale

logger = logging.getLogger(__name__)


def minmax_normalize(values, invert: bool = False) -> Tuple[np.ndarray, MinMaxScale]:
    """
    Map the observed range onto [0, 1]

    A constant input maps to zeros. With `invert`, high values map to 0
    (useful when a larger outcome means a better state).

    Raises:
        ModelError: If there is no non-missing value to scale
    """
    array = np.asarray(values, dtype=float)
    if not np.any(~np.isnan(array)):
        raise ModelError("cannot normalise: no non-missing values")
    lo, hi = float(np.nanmin(array)), float(np.nanmax(array))
    if hi > lo:
        scaled = (array - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(array)
    if invert:
        scaled = 1.0 - scaled
    return scaled, MinMaxScale(lo, hi)


def binarize_treatment(metric_values: pd.Series) -> pd.Series:
    """
    True where the value is strictly above the median of non-missing values

    Missing inputs stay missing (pandas nullable boolean).
    """
    values = pd.to_numeric(pd.Series(metric_values), errors="coerce")
    present = values.dropna()
    result = pd.Series(pd.NA, index=values.index, dtype="boolean")
    if present.empty:
        return result
    median = float(present.median())
    result[present.index] = present.to_numpy() > median
    return result


def build_design_matrix(frame: pd.DataFrame, outcome: str, predictors: Sequence[str],
                        coords: Sequence[str] = ("x", "y"), id_column: str = "area_id",
                        normalize_outcome: bool = True) -> DesignMatrix:
    """
    Complete-case design matrix

    Rows missing the outcome, any predictor or a coordinate are dropped and
    reported. The outcome is min-max normalised over the kept rows.

    Raises:
        ModelError: If fewer complete rows remain than the model needs
    """
    columns = [outcome, *predictors, *coords]
    complete = frame[columns].notna().all(axis=1)
    dropped = tuple(frame.loc[~complete, id_column].astype(str))
    if dropped:
        logger.warning(f"Dropped {len(dropped)} rows with missing values for outcome '{outcome}'")
    kept = frame.loc[complete].sort_values(id_column, kind="mergesort")
    if len(kept) < len(predictors) + 2:
        raise ModelError(f"{outcome}: {len(kept)} complete rows of {len(frame)}, need at least {len(predictors) + 2}")

    y = kept[outcome].to_numpy(dtype=float)
    scale: Optional[MinMaxScale] = None
    if normalize_outcome:
        y, scale = minmax_normalize(y)
    return DesignMatrix(
        area_ids=tuple(kept[id_column].astype(str)),
        y=y,
        X=kept[list(predictors)].to_numpy(dtype=float),
        predictors=tuple(predictors),
        coords=kept[list(coords)].to_numpy(dtype=float),
        outcome=outcome,
        outcome_scale=scale,
        dropped=dropped,
    )

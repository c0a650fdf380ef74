"""
Statistical Models
Design matrices and the GWR / PSM result records
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import ModelError


@dataclass(frozen=True)
class MinMaxScale:
    """Observed range of a min-max normalised variable"""
    lo: float
    hi: float

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * (self.hi - self.lo) + self.lo


@dataclass(frozen=True)
class DesignMatrix:
    """
    One row per area: outcome, predictors and coordinates
    Rows with any missing cell are dropped before construction
    """
    area_ids: Tuple[str, ...]
    y: np.ndarray
    X: np.ndarray
    predictors: Tuple[str, ...]
    coords: np.ndarray
    outcome: str = "y"
    outcome_scale: Optional[MinMaxScale] = None
    dropped: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        n, k = self.X.shape
        if len(self.y) != n or self.coords.shape != (n, 2) or len(self.area_ids) != n:
            raise ModelError("design matrix parts disagree on the number of rows")
        if n < k + 2:
            raise ModelError(f"need at least {k + 2} complete rows for {k} predictors, got {n}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def take(self, index: np.ndarray) -> "DesignMatrix":
        """Rows selected (with repetition) by position"""
        return DesignMatrix(
            area_ids=tuple(self.area_ids[i] for i in index),
            y=self.y[index],
            X=self.X[index],
            predictors=self.predictors,
            coords=self.coords[index],
            outcome=self.outcome,
            outcome_scale=self.outcome_scale,
        )

    def frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.predictors))
        df.insert(0, "area_id", list(self.area_ids))
        df[self.outcome] = self.y
        return df


class GwrResult(BaseModel):
    """Local coefficient surfaces of a geographically weighted regression"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    area_ids: List[str]
    predictors: List[str] = Field(..., description="Names of the columns of params, intercept first")
    params: np.ndarray = Field(..., description="n x (k+1) local coefficients")
    std_errors: np.ndarray = Field(..., description="n x (k+1) local standard errors")
    local_r2: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    bandwidth: int = Field(..., description="Neighbour count of the adaptive kernel")
    kernel: str
    aicc: float
    trace_s: float
    ols_params: List[float] = Field(default_factory=list)
    ols_aicc: Optional[float] = None
    failures: Dict[int, str] = Field(default_factory=dict, description="Row index -> reason for skipped locations")

    def coefficient_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.params, columns=[f"beta_{name}" for name in self.predictors])
        for j, name in enumerate(self.predictors):
            df[f"se_{name}"] = self.std_errors[:, j]
        df["local_r2"] = self.local_r2
        df.insert(0, "area_id", self.area_ids)
        return df


class AteResult(BaseModel):
    """Bootstrapped propensity-score-matching treatment effect"""
    treatment: str
    outcome: str = ""
    ate_mean: float
    se: float = Field(..., ge=0.0)
    ci99: Tuple[float, float]
    significant: bool
    bootstrap_draws: List[float]
    ate_full_sample: Optional[float] = None
    ate_percent: float = Field(0.0, description="ate_mean on a 0-100 scale")
    redrawn_resamples: int = 0
    matched_pairs_full_sample: int = 0
    balance: Dict[str, Tuple[float, float]] = Field(
        default_factory=dict, description="Covariate -> standardized mean difference before/after matching"
    )

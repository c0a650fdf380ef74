"""
Geographically Weighted Regression
Local weighted least squares with adaptive kernels and AICc bandwidth search
"""

import logging
import math
from typing import Dict, NamedTuple, Optional

import numpy as np
import statsmodels.api as sm
from scipy.spatial.distance import cdist

from ..exceptions import ModelError
from ..models.stats import DesignMatrix, GwrResult

logger = logging.getLogger(__name__)

KERNELS = ("adaptive_bisquare", "uniform")
# widens the bw-th neighbour distance so that neighbour keeps a positive weight
BANDWIDTH_EPS = 1.0000001
MAX_CONDITION = 1e12
GOLDEN = 0.38197


class LocalFit(NamedTuple):
    params: np.ndarray
    var_factors: np.ndarray
    fitted: np.ndarray
    local_r2: np.ndarray
    trace_s: float
    trace_sts: float
    failures: Dict[int, str]


def kernel_weights(distances: np.ndarray, bandwidth: int, kernel: str) -> np.ndarray:
    """
    Row-wise adaptive weights from a full distance matrix

    The bandwidth is a neighbour count including the location itself.
    """
    if kernel not in KERNELS:
        raise ModelError(f"unknown kernel '{kernel}'")
    n = distances.shape[0]
    reach = np.partition(distances, bandwidth - 1, axis=1)[:, bandwidth - 1] * BANDWIDTH_EPS
    reach = np.where(reach > 0, reach, np.finfo(float).tiny)[:, None]
    if kernel == "uniform":
        return (distances <= reach).astype(float)
    ratio = distances / reach
    weights = (1.0 - ratio ** 2) ** 2
    weights[ratio >= 1.0] = 0.0
    return weights.reshape(n, n)


def _local_fits(X: np.ndarray, y: np.ndarray, weights: np.ndarray, full: bool) -> LocalFit:
    n, p = X.shape
    params = np.full((n, p), np.nan)
    var_factors = np.full((n, p), np.nan)
    fitted = np.full(n, np.nan)
    local_r2 = np.full(n, np.nan)
    trace_s = 0.0
    trace_sts = 0.0
    failures: Dict[int, str] = {}
    for i in range(n):
        w = weights[i]
        xtw = X.T * w
        xtwx = xtw @ X
        try:
            if np.linalg.cond(xtwx) > MAX_CONDITION:
                raise np.linalg.LinAlgError("ill-conditioned local design")
            c = np.linalg.solve(xtwx, xtw)
        except np.linalg.LinAlgError as exc:
            failures[i] = str(exc)
            continue
        beta = c @ y
        params[i] = beta
        s_row = X[i] @ c
        fitted[i] = X[i] @ beta
        trace_s += s_row[i]
        trace_sts += float(s_row @ s_row)
        if full:
            var_factors[i] = np.sum(c * c, axis=1)
            ybar = np.sum(w * y) / np.sum(w)
            tss = np.sum(w * (y - ybar) ** 2)
            rss = np.sum(w * (y - X @ beta) ** 2)
            local_r2[i] = (tss - rss) / tss if tss > 0 else np.nan
    return LocalFit(params, var_factors, fitted, local_r2, trace_s, trace_sts, failures)


def aicc(rss: float, n: int, trace_s: float) -> float:
    """2n·ln σ̂ + n·ln 2π + n(n + tr S)/(n − 2 − tr S), σ̂² = RSS/n"""
    if n - 2.0 - trace_s <= 0 or rss <= 0:
        return math.inf
    sigma = math.sqrt(rss / n)
    return 2.0 * n * math.log(sigma) + n * math.log(2.0 * math.pi) + n * (n + trace_s) / (n - 2.0 - trace_s)


def _score(X, y, distances, bandwidth, kernel) -> float:
    fit = _local_fits(X, y, kernel_weights(distances, bandwidth, kernel), full=False)
    if fit.failures:
        return math.inf
    return aicc(float(np.sum((y - fit.fitted) ** 2)), len(y), fit.trace_s)


def select_bandwidth(X: np.ndarray, y: np.ndarray, distances: np.ndarray, kernel: str,
                     lower: int, upper: int) -> int:
    """Integer golden-section search for the AICc-minimising neighbour count"""
    cache: Dict[int, float] = {}

    def score(bw: int) -> float:
        if bw not in cache:
            cache[bw] = _score(X, y, distances, bw, kernel)
            logger.debug(f"Bandwidth {bw}: AICc {cache[bw]:.4f}")
        return cache[bw]

    a, c = lower, upper
    while c - a > 3:
        b = int(round(a + GOLDEN * (c - a)))
        d = int(round(c - GOLDEN * (c - a)))
        if b == d:
            d = b + 1
        if score(b) <= score(d):
            c = d
        else:
            a = b
    return min(range(a, c + 1), key=lambda bw: (score(bw), bw))


def ols_baseline(data: DesignMatrix):
    """Global least squares on the same design, for comparison"""
    exog = sm.add_constant(data.X, has_constant="add")
    return sm.OLS(data.y, exog).fit()


def gwr_fit(data: DesignMatrix, kernel: str = "adaptive_bisquare", bandwidth: Optional[int] = None) -> GwrResult:
    """
    Fit a geographically weighted regression

    Args:
        data: Complete-case design matrix (outcome, predictors, coordinates)
        kernel: adaptive_bisquare, or uniform (box weights over the bw nearest)
        bandwidth: Neighbour count; selected by golden-section search on
            AICc over [k+2, n] when omitted

    Returns:
        GwrResult with local coefficients, standard errors, local R² and
        diagnostics; locations with a singular local design hold NaN

    Raises:
        ModelError: Unknown kernel or bandwidth outside [k+2, n]
    """
    if kernel not in KERNELS:
        raise ModelError(f"unknown kernel '{kernel}'")
    n, k = data.n, data.k
    X = np.column_stack([np.ones(n), data.X])
    y = data.y
    distances = cdist(data.coords, data.coords)

    lower = k + 2
    if bandwidth is None:
        bandwidth = select_bandwidth(X, y, distances, kernel, lower, n)
        logger.info(f"Selected GWR bandwidth {bandwidth} of [{lower}, {n}]")
    elif not lower <= bandwidth <= n:
        raise ModelError(f"bandwidth {bandwidth} outside [{lower}, {n}]")

    fit = _local_fits(X, y, kernel_weights(distances, bandwidth, kernel), full=True)
    ok = ~np.isnan(fit.fitted)
    residuals = y - fit.fitted
    rss = float(np.sum(residuals[ok] ** 2))
    dof = n - 2.0 * fit.trace_s + fit.trace_sts
    sigma2 = rss / dof if dof > 0 else np.nan
    std_errors = np.sqrt(fit.var_factors * sigma2)
    if fit.failures:
        logger.warning(f"GWR skipped {len(fit.failures)} locations with singular local designs")

    ols = ols_baseline(data)
    ols_rss = float(np.sum(ols.resid ** 2))
    return GwrResult(
        area_ids=list(data.area_ids),
        predictors=["intercept", *data.predictors],
        params=fit.params,
        std_errors=std_errors,
        local_r2=fit.local_r2,
        fitted=fit.fitted,
        residuals=residuals,
        bandwidth=int(bandwidth),
        kernel=kernel,
        aicc=aicc(rss, n, fit.trace_s),
        trace_s=fit.trace_s,
        ols_params=[float(v) for v in ols.params],
        ols_aicc=aicc(ols_rss, n, float(k + 1)),
        failures=fit.failures,
    )

"""
Propensity Score Matching
Logistic propensity model, caliper nearest-neighbour matching and bootstrap ATE
"""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import statsmodels.api as sm
from sklearn.neighbors import NearestNeighbors
from statsmodels.tools.sm_exceptions import PerfectSeparationError, PerfectSeparationWarning

from ..exceptions import ModelError, SeparationError
from ..models.stats import AteResult, DesignMatrix
from ..utils.timing import time_logger

logger = logging.getLogger(__name__)

DEFAULT_CALIPER = 0.2
MIN_MATCHED_PAIRS = 10
MAX_REDRAWS = 100
# fitted probabilities this close to 0/1 indicate (quasi-)separation
PROBABILITY_FLOOR = 1e-8


class PropensityModel(NamedTuple):
    scores: np.ndarray
    params: np.ndarray
    logit: np.ndarray


class MatchedPairs(NamedTuple):
    """Index pairs (control, treated) into the matched sample"""
    control: np.ndarray
    treated: np.ndarray


def _treatment_array(treatment) -> np.ndarray:
    t = np.asarray(treatment)
    if t.dtype == object:
        if any(v is None for v in t):
            raise ModelError("treatment flags contain missing values")
    return t.astype(bool)


def fit_propensity(data: DesignMatrix, treatment) -> PropensityModel:
    """
    Maximum-likelihood logistic model of treatment on the design's predictors

    Raises:
        ModelError: A treatment group is empty
        SeparationError: The covariates perfectly predict treatment
    """
    t = _treatment_array(treatment)
    if t.all() or not t.any():
        raise ModelError("propensity model needs both treated and control areas")
    exog = sm.add_constant(data.X, has_constant="add")
    advice = "review the covariates or tighten the caliper"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            warnings.simplefilter("error", PerfectSeparationWarning)
            result = sm.Logit(t.astype(float), exog).fit(disp=0, maxiter=200)
    except (PerfectSeparationError, PerfectSeparationWarning) as exc:
        raise SeparationError(f"treatment is perfectly separated by the covariates; {advice}") from exc
    except np.linalg.LinAlgError as exc:
        raise SeparationError(f"propensity model is singular ({exc}); {advice}") from exc

    params = np.asarray(result.params, dtype=float)
    linear = exog @ params
    scores = 1.0 / (1.0 + np.exp(-linear))
    if (
        not np.all(np.isfinite(params))
        or linear[t].min() > linear[~t].max()
        or linear[~t].min() > linear[t].max()
        or np.any(scores < PROBABILITY_FLOOR)
        or np.any(scores > 1.0 - PROBABILITY_FLOOR)
    ):
        raise SeparationError(f"treatment is (quasi-)separated by the covariates; {advice}")
    return PropensityModel(scores=scores, params=params, logit=linear)


def propensity_scores(data: DesignMatrix, treatment) -> np.ndarray:
    """Fitted treatment probabilities in (0, 1), one per row"""
    return fit_propensity(data, treatment).scores


def match_pairs(logit: np.ndarray, treatment: np.ndarray, caliper: Optional[float] = DEFAULT_CALIPER) -> MatchedPairs:
    """
    1-nearest-neighbour matching with replacement on the logit, both directions

    Each treated row is paired with its nearest control and each control with
    its nearest treated row; pairs farther apart than caliper·SD(logit) are dropped.
    """
    t = np.asarray(treatment, dtype=bool)
    treated_idx = np.flatnonzero(t)
    control_idx = np.flatnonzero(~t)
    limit = np.inf if caliper is None else caliper * float(np.std(logit, ddof=1))

    controls: List[np.ndarray] = []
    treateds: List[np.ndarray] = []
    for source, target, source_is_treated in ((treated_idx, control_idx, True), (control_idx, treated_idx, False)):
        nn = NearestNeighbors(n_neighbors=1).fit(logit[target].reshape(-1, 1))
        distance, nearest = nn.kneighbors(logit[source].reshape(-1, 1))
        keep = distance[:, 0] <= limit
        partners = target[nearest[keep, 0]]
        members = source[keep]
        if source_is_treated:
            treateds.append(members)
            controls.append(partners)
        else:
            controls.append(members)
            treateds.append(partners)
    return MatchedPairs(np.concatenate(controls), np.concatenate(treateds))


def matched_ate(y: np.ndarray, pairs: MatchedPairs) -> float:
    """Mean outcome difference treated minus control over matched pairs"""
    return float(np.mean(y[pairs.treated] - y[pairs.control]))


def standardized_mean_difference(x: np.ndarray, treated: np.ndarray, control: np.ndarray) -> float:
    a, b = x[treated], x[control]
    pooled = np.sqrt((np.var(a, ddof=1) + np.var(b, ddof=1)) / 2.0) if len(a) > 1 and len(b) > 1 else 0.0
    if pooled == 0:
        return 0.0
    return float((a.mean() - b.mean()) / pooled)


def covariate_balance(data: DesignMatrix, treatment: np.ndarray, pairs: MatchedPairs) -> Dict[str, Tuple[float, float]]:
    """Standardized mean difference per covariate before and after matching"""
    t = np.asarray(treatment, dtype=bool)
    balance = {}
    for j, name in enumerate(data.predictors):
        column = data.X[:, j]
        before = standardized_mean_difference(column, np.flatnonzero(t), np.flatnonzero(~t))
        after = standardized_mean_difference(column, pairs.treated, pairs.control)
        balance[name] = (before, after)
    return balance


class _Replicate(NamedTuple):
    ate: float
    redraws: int


def _replicate(data: DesignMatrix, treatment: np.ndarray, seed: int, index: int,
               caliper: Optional[float], min_pairs: int) -> _Replicate:
    rng = np.random.default_rng([seed, index])
    n = data.n
    for attempt in range(MAX_REDRAWS + 1):
        rows = rng.integers(0, n, size=n)
        sample, t = data.take(rows), treatment[rows]
        if t.all() or not t.any():
            continue
        try:
            model = fit_propensity(sample, t)
        except ModelError:
            continue
        pairs = match_pairs(model.logit, t, caliper)
        if len(pairs.treated) < min_pairs:
            continue
        return _Replicate(matched_ate(sample.y, pairs), attempt)
    raise ModelError(f"bootstrap replicate {index}: no usable resample after {MAX_REDRAWS} redraws")


_STATE: Dict[str, object] = {}


def _init_worker(data, treatment, seed, caliper, min_pairs):
    _STATE.update(data=data, treatment=treatment, seed=seed, caliper=caliper, min_pairs=min_pairs)


def _replicate_chunk(indices: Sequence[int]) -> List[_Replicate]:
    return [
        _replicate(_STATE["data"], _STATE["treatment"], _STATE["seed"], i, _STATE["caliper"], _STATE["min_pairs"])
        for i in indices
    ]


@time_logger
def psm_ate(data: DesignMatrix, treatment, B: int = 1000, seed: int = 0, caliper: Optional[float] = DEFAULT_CALIPER,
            min_pairs: int = MIN_MATCHED_PAIRS, jobs: int = 1, treatment_name: str = "treatment") -> AteResult:
    """
    Bootstrapped propensity-score-matching average treatment effect

    Every replicate resamples areas with replacement from its own random
    stream seeded by (seed, replicate), refits the propensity model and
    matches; resamples that separate, lose a group or yield fewer than
    `min_pairs` pairs are redrawn.

    Args:
        data: Design matrix whose predictors are the confounders and whose
            y is the (normalised) outcome
        treatment: Per-row booleans
        B: Bootstrap replicates
        seed: Base seed
        caliper: Caliper in SDs of the logit, None for no caliper
        min_pairs: Fewest matched pairs a replicate may use
        jobs: Worker processes
        treatment_name: Label stored on the result

    Returns:
        AteResult with mean, SE, 99% percentile interval and diagnostics
    """
    t = _treatment_array(treatment)
    if len(t) != data.n:
        raise ModelError(f"{len(t)} treatment flags for {data.n} rows")
    if t.all() or not t.any():
        raise ModelError("psm_ate needs both treated and control areas")

    chunk = max(1, B // max(jobs * 4, 1))
    chunks = [list(range(s, min(s + chunk, B))) for s in range(0, B, chunk)]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                 initargs=(data, t, seed, caliper, min_pairs)) as executor:
            replicates = [r for part in executor.map(_replicate_chunk, chunks) for r in part]
    else:
        replicates = [_replicate(data, t, seed, i, caliper, min_pairs) for i in range(B)]

    draws = np.array([r.ate for r in replicates], dtype=float)
    redraws = int(sum(r.redraws for r in replicates))
    if redraws:
        logger.warning(f"{treatment_name}: {redraws} bootstrap resamples were discarded and redrawn")

    lo, hi = np.percentile(draws, [0.5, 99.5])
    mean = float(draws.mean())
    se = float(draws.std(ddof=1)) if B > 1 else 0.0

    full_ate, full_pairs, balance = None, 0, {}
    try:
        model = fit_propensity(data, t)
        pairs = match_pairs(model.logit, t, caliper)
        if len(pairs.treated):
            full_ate = matched_ate(data.y, pairs)
            full_pairs = int(len(pairs.treated))
            balance = covariate_balance(data, t, pairs)
    except ModelError as exc:
        logger.warning(f"{treatment_name}: full-sample propensity model failed: {exc}")

    return AteResult(
        treatment=treatment_name,
        outcome=data.outcome,
        ate_mean=mean,
        se=se,
        ci99=(float(lo), float(hi)),
        significant=not (lo <= 0.0 <= hi),
        bootstrap_draws=draws.tolist(),
        ate_full_sample=full_ate,
        ate_percent=100.0 * mean,
        redrawn_resamples=redraws,
        matched_pairs_full_sample=full_pairs,
        balance=balance,
    )

"""
Statistical model tests

Design matrix assembly, GWR against global least squares and planted
spatial trends, and PSM against planted treatment effects.
"""

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm

from greenery_health.core.design import binarize_treatment, build_design_matrix, minmax_normalize
from greenery_health.core.gwr import aicc, gwr_fit, kernel_weights
from greenery_health.core.psm import fit_propensity, match_pairs, matched_ate, psm_ate
from greenery_health.exceptions import ModelError, SeparationError
from greenery_health.models.stats import DesignMatrix


def design(X, y, coords=None) -> DesignMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if coords is None:
        coords = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return DesignMatrix(
        area_ids=tuple(f"E{i:04d}" for i in range(n)),
        y=np.asarray(y, dtype=float),
        X=X,
        predictors=tuple(f"x{j}" for j in range(X.shape[1])),
        coords=np.asarray(coords, dtype=float),
    )


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


# ---------------------------------------------------------------------------
# Design matrix
# ---------------------------------------------------------------------------

class TestDesign:
    def test_minmax_maps_range(self):
        scaled, scale = minmax_normalize([2.0, 4.0, 6.0])
        assert scaled.tolist() == [0.0, 0.5, 1.0]
        assert (scale.lo, scale.hi) == (2.0, 6.0)

    def test_minmax_inverse(self):
        values = np.random.default_rng(4).normal(10.0, 3.0, size=50)
        scaled, scale = minmax_normalize(values)
        assert np.max(np.abs(scale.inverse(scaled) - values)) < 1e-12

    def test_minmax_constant_and_inverted(self):
        assert minmax_normalize([3.0, 3.0])[0].tolist() == [0.0, 0.0]
        assert minmax_normalize([1.0, 3.0], invert=True)[0].tolist() == [1.0, 0.0]

    def test_binarize_above_median(self):
        assert binarize_treatment(pd.Series([1.0, 2.0, 3.0])).tolist() == [False, False, True]
        assert binarize_treatment(pd.Series([4.0, 1.0, 3.0, 2.0])).tolist() == [True, False, True, False]

    def test_binarize_all_equal(self):
        assert not binarize_treatment(pd.Series([0.4] * 5)).any()

    def test_binarize_keeps_missing(self):
        flags = binarize_treatment(pd.Series([1.0, None, 3.0]))
        assert flags.isna().tolist() == [False, True, False]
        assert bool(flags.iloc[2])

    def test_incomplete_rows_dropped(self):
        frame = pd.DataFrame({
            "area_id": ["d", "a", "c", "b", "e"],
            "rate": [4.0, 1.0, None, 2.0, 3.0],
            "green": [0.4, 0.1, 0.3, 0.2, None],
            "x": [0.0, 1.0, 2.0, 3.0, 4.0],
            "y": [0.0] * 5,
        })
        data = build_design_matrix(frame, "rate", ["green"])
        assert data.area_ids == ("a", "b", "d")
        assert data.dropped == ("c", "e")
        assert data.y.tolist() == pytest.approx([0.0, 1 / 3, 1.0])
        assert data.outcome_scale.inverse(data.y).tolist() == pytest.approx([1.0, 2.0, 4.0])

    def test_too_few_complete_rows(self):
        frame = pd.DataFrame({"area_id": ["a", "b"], "rate": [1.0, 2.0], "green": [0.1, 0.2],
                              "x": [0.0, 1.0], "y": [0.0, 0.0]})
        with pytest.raises(ModelError):
            build_design_matrix(frame, "rate", ["green"])

    def test_metric_missing_everywhere(self):
        frame = pd.DataFrame({"area_id": list("abcdef"), "rate": np.arange(6.0), "gsv": [np.nan] * 6,
                              "x": np.arange(6.0), "y": np.zeros(6)})
        with pytest.raises(ModelError, match="0 complete rows"):
            build_design_matrix(frame, "rate", ["gsv"])

    def test_minmax_needs_a_value(self):
        with pytest.raises(ModelError):
            minmax_normalize([])
        with pytest.raises(ModelError):
            minmax_normalize([np.nan, np.nan])


# ---------------------------------------------------------------------------
# GWR
# ---------------------------------------------------------------------------

class TestGwr:
    def test_uniform_full_bandwidth_is_ols(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 2))
        y = 1.0 + X @ np.array([0.5, -2.0]) + rng.normal(scale=0.1, size=40)
        data = design(X, y, rng.uniform(0, 1000, size=(40, 2)))

        result = gwr_fit(data, kernel="uniform", bandwidth=40)
        ols = sm.OLS(y, sm.add_constant(X)).fit()
        assert np.max(np.abs(result.params - ols.params)) < 1e-8
        assert result.trace_s == pytest.approx(3.0)
        assert result.ols_params == pytest.approx(list(ols.params))

    def test_recovers_spatially_varying_slope(self):
        rng = np.random.default_rng(1)
        u, v = np.meshgrid(np.arange(12.0), np.arange(12.0))
        coords = np.column_stack([u.ravel(), v.ravel()]) * 100.0
        slope = 1.0 + u.ravel() / 11.0
        x = rng.normal(size=144)
        y = 0.5 + slope * x + rng.normal(scale=0.05, size=144)

        result = gwr_fit(design(x, y, coords))
        assert 3 <= result.bandwidth <= 144
        assert np.corrcoef(result.params[:, 1], slope)[0, 1] > 0.9
        assert not result.failures
        assert np.all(result.std_errors[:, 1] > 0)
        assert result.aicc < result.ols_aicc

    @pytest.mark.slow
    def test_constant_coefficients_within_three_errors(self):
        rng = np.random.default_rng(8)
        u, v = np.meshgrid(np.arange(15.0), np.arange(15.0))
        coords = np.column_stack([u.ravel(), v.ravel()]) * 100.0
        x = rng.normal(size=225)
        y = 1.0 + 2.0 * x + rng.normal(scale=0.2, size=225)

        result = gwr_fit(design(x, y, coords))
        for j, beta in enumerate((1.0, 2.0)):
            covered = np.abs(result.params[:, j] - beta) <= 3.0 * result.std_errors[:, j]
            assert covered.mean() >= 0.95

    def test_coefficient_frame(self):
        rng = np.random.default_rng(2)
        data = design(rng.normal(size=20), rng.normal(size=20))
        frame = gwr_fit(data, kernel="uniform", bandwidth=20).coefficient_frame()
        assert list(frame.columns) == ["area_id", "beta_intercept", "beta_x0", "se_intercept", "se_x0", "local_r2"]
        assert len(frame) == 20

    def test_rejects_bad_kernel_and_bandwidth(self):
        data = design(np.arange(10.0), np.arange(10.0) ** 2)
        with pytest.raises(ModelError):
            gwr_fit(data, kernel="gaussian")
        with pytest.raises(ModelError):
            gwr_fit(data, bandwidth=2)
        with pytest.raises(ModelError):
            gwr_fit(data, bandwidth=11)

    def test_bisquare_weights(self):
        distances = np.array([[0.0, 1.0, 2.0, 3.0]])
        weights = kernel_weights(distances, 3, "adaptive_bisquare")[0]
        assert weights[0] == 1.0
        assert weights[1] == pytest.approx((1 - 0.25) ** 2, rel=1e-6)
        assert 0.0 < weights[2] < 1e-6
        assert weights[3] == 0.0

    def test_aicc_undefined_when_saturated(self):
        assert aicc(1.0, 10, 8.0) == float("inf")
        assert aicc(0.0, 10, 2.0) == float("inf")


# ---------------------------------------------------------------------------
# Propensity score matching
# ---------------------------------------------------------------------------

class TestPropensity:
    def test_balanced_independent_treatment(self):
        rng = np.random.default_rng(3)
        t = np.arange(400) % 2 == 0
        model = fit_propensity(design(rng.normal(size=400), np.zeros(400)), t)
        assert model.scores.mean() == pytest.approx(0.5, abs=1e-6)
        assert np.all((model.scores > 0) & (model.scores < 1))

    def test_separation_detected(self):
        t = np.arange(30) >= 15
        x = t.astype(float) + np.linspace(0, 0.01, 30)
        with pytest.raises(SeparationError):
            fit_propensity(design(x, np.zeros(30)), t)

    def test_recovers_logistic_coefficient(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=4000)
        t = rng.random(4000) < sigmoid(x)
        model = fit_propensity(design(x, np.zeros(4000)), t)
        assert model.params[1] == pytest.approx(1.0, abs=0.15)
        assert model.params[0] == pytest.approx(0.0, abs=0.15)

    def test_one_group_rejected(self):
        with pytest.raises(ModelError):
            fit_propensity(design(np.arange(6.0), np.zeros(6)), np.ones(6, dtype=bool))


class TestMatching:
    def test_pairs_by_hand(self):
        logit = np.array([0.0, 0.1, 1.0, 1.05, 5.0])
        t = np.array([False, True, False, True, True])
        pairs = match_pairs(logit, t, caliper=None)
        assert pairs.control.tolist() == [0, 2, 2, 0, 2]
        assert pairs.treated.tolist() == [1, 3, 4, 1, 3]

    def test_caliper_drops_distant_pairs(self):
        # SD of the logit is about 2.05, so the caliper is about 0.41
        logit = np.array([0.0, 0.1, 1.0, 1.05, 5.0])
        t = np.array([False, True, False, True, True])
        pairs = match_pairs(logit, t, caliper=0.2)
        assert pairs.control.tolist() == [0, 2, 0, 2]
        assert pairs.treated.tolist() == [1, 3, 1, 3]

    def test_matched_ate(self):
        pairs = match_pairs(np.array([0.0, 0.1, 1.0, 1.05]), np.array([False, True, False, True]), None)
        assert matched_ate(np.array([1.0, 3.0, 2.0, 2.5]), pairs) == pytest.approx(1.25)


@pytest.fixture(scope="module")
def planted():
    """400 areas whose treatment depends on one confounder; true effect 0.05"""
    rng = np.random.default_rng(42)
    x = rng.normal(size=400)
    t = rng.random(400) < sigmoid(x)
    y = 0.05 * t + 0.05 * x + rng.normal(scale=0.01, size=400)
    return design(x, y), t


class TestPsmAte:
    def test_constant_outcome_has_no_effect(self, planted):
        data, t = planted
        flat = design(data.X, np.full(data.n, 0.3))
        result = psm_ate(flat, t, B=20, seed=1)
        assert result.ate_mean == 0.0
        assert result.ci99 == (0.0, 0.0)
        assert not result.significant

    def test_recovers_planted_effect(self, planted):
        data, t = planted
        result = psm_ate(data, t, B=50, seed=7, treatment_name="green")
        assert result.ate_mean == pytest.approx(0.05, abs=0.015)
        assert result.significant
        assert result.ci99[0] <= result.ate_mean <= result.ci99[1]
        assert len(result.bootstrap_draws) == 50
        assert result.treatment == "green"
        assert result.ate_percent == pytest.approx(100.0 * result.ate_mean)

    def test_matching_improves_balance(self, planted):
        data, t = planted
        before, after = psm_ate(data, t, B=5, seed=0).balance["x0"]
        assert abs(after) < abs(before)

    def test_same_seed_same_draws(self, planted):
        data, t = planted
        first = psm_ate(data, t, B=20, seed=11)
        assert psm_ate(data, t, B=20, seed=11).bootstrap_draws == first.bootstrap_draws
        assert psm_ate(data, t, B=20, seed=12).bootstrap_draws != first.bootstrap_draws

    def test_parallel_workers_same_draws(self, planted):
        data, t = planted
        assert psm_ate(data, t, B=16, seed=3, jobs=2).bootstrap_draws == psm_ate(data, t, B=16, seed=3).bootstrap_draws

    def test_affine_outcome_scales_effect(self, planted):
        data, t = planted
        moved = design(data.X, 3.0 * data.y + 2.0)
        base = psm_ate(data, t, B=20, seed=5)
        assert psm_ate(moved, t, B=20, seed=5).ate_mean == pytest.approx(3.0 * base.ate_mean, rel=1e-9)

    @pytest.mark.slow
    def test_permuted_flags_rarely_significant(self):
        rng = np.random.default_rng(2024)
        x = rng.normal(size=160)
        data = design(x, 0.5 + 0.05 * x + rng.normal(scale=0.05, size=160))
        flags = np.arange(160) < 80
        hits = sum(psm_ate(data, rng.permutation(flags), B=60, seed=run).significant for run in range(80))
        assert hits <= 4

    def test_needs_both_groups(self, planted):
        data, _ = planted
        with pytest.raises(ModelError):
            psm_ate(data, np.ones(data.n, dtype=bool), B=5)

    def test_missing_flags_rejected(self):
        with pytest.raises(ModelError):
            psm_ate(design(np.arange(6.0), np.zeros(6)), np.array([True, False, None, True, False, True], dtype=object))

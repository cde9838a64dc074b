"""End-to-end estimator pipeline: pilots, selection, refit, intervals."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsel.estimators import (
    Dataset,
    EstimationConfig,
    FirstStage,
    alpha_median,
    default_subsample_size,
    estimate_invalid_tcp,
    estimate_invalid_tcp_ocp,
    first_stage,
    median_gamma,
    naive_p2sls,
    ols_baseline,
    oracle_p2sls,
    post_adaptive_2sls,
    subsample_ci,
    _median_1d,
)
from proxsel.exceptions import (
    AggregateFailure,
    AssumptionViolation,
    InvalidBound,
    RankDeficient,
    WeakProxyWarning,
)
from proxsel.linalg import ols, residual_project
from proxsel.simulation import (
    SimConfig,
    generate_invalid_tcp_data,
    generate_invalid_tcp_ocp_data,
)

from conftest import make_exact_dataset, population_first_stage


def ratio_first_stage(gamma_block, delta_block) -> FirstStage:
    g = np.asarray(gamma_block, float)
    d = np.asarray(delta_block, float)
    return FirstStage(
        what=np.zeros(2), gamma_hat_vec=g, delta_hat_vec=d, n_tcps=g.size
    )


class TestFirstStage:
    def test_fitted_ocp_is_the_projection_on_the_augmented_design(self):
        data = generate_invalid_tcp_data(SimConfig(n=300, p_z=5, s_z=2), 0)
        fs = first_stage(data)
        m = np.concatenate(
            [data.Z, data.D[:, None], data.X, np.ones((data.n, 1))], axis=1
        )
        fitted = m @ np.linalg.lstsq(m, data.W[:, 0], rcond=None)[0]
        np.testing.assert_allclose(fs.what, fitted, atol=1e-8)

    def test_coefficient_vectors_match_direct_least_squares(self):
        data = generate_invalid_tcp_data(SimConfig(n=300, p_z=5, s_z=2), 1)
        fs = first_stage(data)
        m = np.concatenate(
            [data.Z, data.D[:, None], data.X, np.ones((data.n, 1))], axis=1
        )
        delta = np.linalg.lstsq(m, data.W[:, 0], rcond=None)[0]
        gamma = np.linalg.lstsq(m, data.Y, rcond=None)[0]
        k = fs.delta_hat_vec.size
        np.testing.assert_allclose(fs.delta_hat_vec, delta[:k], atol=1e-8)
        np.testing.assert_allclose(fs.gamma_hat_vec, gamma[:k], atol=1e-8)
        assert fs.n_tcps == 5

    def test_ocp_index_out_of_range(self):
        data = generate_invalid_tcp_data(SimConfig(n=100, p_z=3, s_z=1), 0)
        with pytest.raises(IndexError):
            first_stage(data, ocp_index=1)


class TestMedianPilots:
    def test_odd_count_takes_the_middle_ratio(self):
        fs = ratio_first_stage([1.0, 1.0, 1.0, 5.0, 9.0], np.ones(5))
        assert median_gamma(fs) == 1.0

    def test_even_count_averages_the_central_ratios(self):
        fs = ratio_first_stage([1.0, 2.0, 5.0, 9.0], np.ones(4))
        assert median_gamma(fs) == pytest.approx(3.5, abs=1e-15)

    def test_ratio_uses_componentwise_division(self):
        fs = ratio_first_stage([2.0, 6.0, -4.0], [1.0, 2.0, -2.0])
        # ratios (2, 3, 2) -> median 2
        assert median_gamma(fs) == pytest.approx(2.0, abs=1e-15)

    def test_population_ratio_recovers_the_confounder_loading(self):
        config = SimConfig(p_z=10, s_z=3, p_w=1, s_w=0)
        fs = population_first_stage(config)
        assert median_gamma(fs) == pytest.approx(0.2, abs=1e-12)

    def test_population_pilot_effects_match_the_generating_pattern(self):
        config = SimConfig(p_z=10, s_z=3, p_w=1, s_w=0)
        fs = population_first_stage(config)
        pilot = alpha_median(fs, median_gamma(fs))
        expected = np.where(np.arange(10) < 3, 0.8, 0.0)
        np.testing.assert_allclose(pilot, expected, atol=1e-10)

    def test_zero_denominator_raises_with_indices(self):
        fs = ratio_first_stage([1.0, 1.0, 1.0], [1.0, 0.0, 1.0])
        with pytest.raises(AssumptionViolation) as err:
            median_gamma(fs)
        assert err.value.indices == [1]
        with pytest.raises(AssumptionViolation):
            alpha_median(fs, 1.0)

    def test_weak_relevance_warns_but_computes(self):
        fs = ratio_first_stage(
            [1.0, 1.0, 1.0, 1.0, 1.0], [1.0, 1.0, 1.0, 1.0, 1e-4]
        )
        with pytest.warns(WeakProxyWarning):
            value = median_gamma(fs)
        assert math.isfinite(value)

    @settings(max_examples=50, deadline=None)
    @given(
        values=st.lists(
            st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=15
        )
    )
    def test_median_agrees_with_numpy(self, values):
        arr = np.asarray(values)
        assert _median_1d(arr) == pytest.approx(
            float(np.median(arr)), rel=1e-15, abs=1e-300
        )

    @settings(max_examples=50, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        n_corrupt=st.integers(0, 3),
        shift=st.floats(-1e9, 1e9, allow_nan=False),
    )
    def test_median_moves_at_most_the_clean_spread(
        self, seed, n_corrupt, shift
    ):
        # corrupting a minority of entries cannot drag the median outside
        # the range of the clean ones
        rng = np.random.default_rng(seed)
        clean = rng.normal(0.0, 1.0, 7)
        corrupted = clean.copy()
        corrupted[:n_corrupt] += shift
        med = _median_1d(corrupted)
        assert clean.min() - 1e-12 <= med <= clean.max() + 1e-12


class TestExactRecovery:
    def test_noiseless_pipeline_recovers_all_coefficients(self):
        data, (beta, gamma, alpha0) = make_exact_dataset()
        est = estimate_invalid_tcp(data)
        assert est.selected_invalid_tcps == (0,)
        assert est.beta_hat == pytest.approx(beta, abs=1e-8)
        assert est.gamma_hat == pytest.approx(gamma, abs=1e-8)
        assert est.alpha_hat[0] == pytest.approx(alpha0, abs=1e-8)
        np.testing.assert_allclose(est.alpha_hat[1:], 0.0)
        assert est.ci_lower <= est.beta_hat <= est.ci_upper

    def test_selected_set_equals_the_support_of_alpha(self):
        data, _ = make_exact_dataset()
        est = estimate_invalid_tcp(data)
        assert est.selected_invalid_tcps == tuple(
            int(j) for j in np.nonzero(est.alpha_hat)[0]
        )

    def test_naive_is_exact_when_every_tcp_is_valid(self):
        data, (beta, _, _) = make_exact_dataset(alpha0=0.0)
        est = naive_p2sls(data)
        assert est.beta_hat == pytest.approx(beta, abs=1e-8)


class TestEmptySelectionReduction:
    def test_huge_penalty_reduces_to_the_naive_estimator(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=400, p_z=6, s_z=2, y_noise_sd=1.0), 0
        )
        est = estimate_invalid_tcp(data, 0, EstimationConfig(lambda_n=1e12))
        naive = naive_p2sls(data)
        assert est.selected_invalid_tcps == ()
        assert est.beta_hat == naive.beta_hat
        assert est.variance == naive.variance
        assert est.ci_lower == naive.ci_lower
        assert est.ci_upper == naive.ci_upper


class TestOracleReduction:
    @pytest.mark.parametrize("rep", range(10))
    def test_refit_on_the_true_set_is_bit_identical_to_the_oracle(self, rep):
        config = SimConfig(n=500, p_z=8, s_z=3, seed=11, y_noise_sd=1.0)
        data = generate_invalid_tcp_data(config, rep)
        manual = post_adaptive_2sls(data, 0, (0, 1, 2))
        oracle = oracle_p2sls(data, (0, 1, 2))
        assert manual.beta_hat == oracle.beta_hat
        assert manual.variance == oracle.variance
        assert manual.ci_lower == oracle.ci_lower
        assert manual.ci_upper == oracle.ci_upper
        np.testing.assert_array_equal(manual.alpha_hat, oracle.alpha_hat)

    def test_oracle_with_every_tcp_marked_invalid_is_degenerate(self):
        data = generate_invalid_tcp_data(SimConfig(n=300, p_z=4, s_z=4), 0)
        with pytest.raises(RankDeficient):
            oracle_p2sls(data, (0, 1, 2, 3))


class TestInvariances:
    def test_treatment_effect_shift_moves_the_estimate_one_for_one(self):
        # at a fixed penalty, adding c*D to the outcome changes nothing
        # upstream of the refit: the selection design is orthogonal to D
        base_cfg = SimConfig(n=400, p_z=6, s_z=2, beta_true=0.5, y_noise_sd=1.0)
        shift_cfg = SimConfig(n=400, p_z=6, s_z=2, beta_true=2.0, y_noise_sd=1.0)
        fixed = EstimationConfig(lambda_n=60.0)
        for rep in range(5):
            a = generate_invalid_tcp_data(base_cfg, rep)
            b = generate_invalid_tcp_data(shift_cfg, rep)
            np.testing.assert_allclose(b.Y - a.Y, 1.5 * a.D, atol=1e-12)
            ea = estimate_invalid_tcp(a, 0, fixed)
            eb = estimate_invalid_tcp(b, 0, fixed)
            assert eb.selected_invalid_tcps == ea.selected_invalid_tcps
            assert eb.beta_hat - ea.beta_hat == pytest.approx(1.5, abs=1e-9)

    def test_outcome_scaling_with_quadratic_penalty_scaling(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=400, p_z=6, s_z=2, y_noise_sd=1.0), 2
        )
        lam = 40.0
        base = estimate_invalid_tcp(data, 0, EstimationConfig(lambda_n=lam))
        for c in (0.1, 5.0):
            scaled_data = Dataset(
                Y=c * data.Y, D=data.D, Z=data.Z, W=data.W
            )
            scaled = estimate_invalid_tcp(
                scaled_data, 0, EstimationConfig(lambda_n=c * c * lam)
            )
            assert scaled.selected_invalid_tcps == base.selected_invalid_tcps
            assert scaled.beta_hat == pytest.approx(
                c * base.beta_hat, rel=1e-9
            )


class TestVariancePlugin:
    def test_plugin_collapses_to_residual_treatment_variation(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=500, p_z=6, s_z=2, y_noise_sd=1.0), 4
        )
        est = estimate_invalid_tcp(data)
        sel = list(est.selected_invalid_tcps)
        what = first_stage(data).what
        design = np.concatenate(
            [
                data.D[:, None],
                data.Z[:, sel],
                what[:, None],
                data.X,
                np.ones((data.n, 1)),
            ],
            axis=1,
        )
        coef = ols(design, data.Y).coefficients
        raw_design = design.copy()
        raw_design[:, 1 + len(sel)] = data.W[:, 0]
        resid = data.Y - raw_design @ coef
        sigma2_eps = float(resid @ resid) / data.n
        d_res = residual_project(design[:, 1:], data.D)
        expected = sigma2_eps / (float(d_res @ d_res) / data.n)
        assert est.variance == pytest.approx(expected, rel=1e-10)

    def test_interval_is_centered_with_the_normal_quantile(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=500, p_z=6, s_z=2, y_noise_sd=1.0), 5
        )
        est = estimate_invalid_tcp(data)
        half = 1.959963984540054 * math.sqrt(est.variance / data.n)
        assert est.ci_lower == pytest.approx(est.beta_hat - half, rel=1e-12)
        assert est.ci_upper == pytest.approx(est.beta_hat + half, rel=1e-12)

    def test_level_is_configurable(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=500, p_z=6, s_z=2, y_noise_sd=1.0), 5
        )
        wide = estimate_invalid_tcp(data, 0, EstimationConfig(alpha_level=0.01))
        narrow = estimate_invalid_tcp(data, 0, EstimationConfig(alpha_level=0.32))
        assert wide.ci_upper - wide.ci_lower > narrow.ci_upper - narrow.ci_lower


class TestMedianOverOcps:
    def test_single_ocp_aggregate_matches_the_single_pipeline(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=400, p_z=6, s_z=2, y_noise_sd=1.0), 6
        )
        single = estimate_invalid_tcp(data)
        agg = estimate_invalid_tcp_ocp(data)
        assert agg.beta_hat == single.beta_hat
        assert agg.method == "median_over_ocps"
        assert math.isnan(agg.variance)
        assert math.isnan(agg.ci_lower) and math.isnan(agg.ci_upper)
        np.testing.assert_array_equal(agg.per_ocp_estimates, [single.beta_hat])

    def test_aggregate_is_the_median_of_the_per_ocp_estimates(self):
        config = SimConfig(
            n=600, p_z=6, s_z=2, p_w=4, s_w=1, y_noise_sd=1.0
        )
        data = generate_invalid_tcp_ocp_data(config, 0)
        agg = estimate_invalid_tcp_ocp(data)
        per = agg.per_ocp_estimates
        assert per.size == 4
        assert np.all(np.isfinite(per))
        assert agg.beta_hat == pytest.approx(float(np.median(per)), abs=1e-15)

    def test_failed_columns_are_nan_and_majority_still_aggregates(self):
        rng = np.random.default_rng(10)
        base = generate_invalid_tcp_ocp_data(
            SimConfig(n=400, p_z=5, s_z=2, p_w=5, s_w=0, y_noise_sd=1.0), 1
        )
        w = base.W.copy()
        w[:, 1] = base.D  # an OCP equal to the treatment cannot be used
        w[:, 3] = 2.0 * base.D + 1.0
        data = Dataset(Y=base.Y, D=base.D, Z=base.Z, W=w, X=base.X)
        agg = estimate_invalid_tcp_ocp(data)
        assert np.isnan(agg.per_ocp_estimates[1])
        assert np.isnan(agg.per_ocp_estimates[3])
        finite = agg.per_ocp_estimates[np.isfinite(agg.per_ocp_estimates)]
        assert finite.size == 3
        assert agg.beta_hat == pytest.approx(float(np.median(finite)), abs=1e-15)

    def test_majority_failure_aborts(self):
        rng = np.random.default_rng(11)
        base = generate_invalid_tcp_ocp_data(
            SimConfig(n=400, p_z=5, s_z=2, p_w=5, s_w=0, y_noise_sd=1.0), 2
        )
        w = base.W.copy()
        for j, c in zip((0, 2, 4), (1.0, 2.0, -1.0)):
            w[:, j] = c * base.D + 0.5
        data = Dataset(Y=base.Y, D=base.D, Z=base.Z, W=w, X=base.X)
        with pytest.raises(AggregateFailure) as err:
            estimate_invalid_tcp_ocp(data)
        assert err.value.n_failed == 3
        assert err.value.n_total == 5


class TestSubsampleCi:
    def test_default_size_follows_the_four_fifths_rule(self):
        assert default_subsample_size(2500) == 522
        assert default_subsample_size(200) == 69
        assert default_subsample_size(2) == 1

    def test_interval_is_deterministic_in_the_seed(self):
        data = generate_invalid_tcp_ocp_data(
            SimConfig(n=300, p_z=4, s_z=1, p_w=2, s_w=0, y_noise_sd=1.0), 0
        )
        a = subsample_ci(data, n_subsamples=20, seed=3)
        b = subsample_ci(data, n_subsamples=20, seed=3)
        c = subsample_ci(data, n_subsamples=20, seed=4)
        assert a == b
        assert a != c

    def test_noiseless_data_yields_a_degenerate_interval(self):
        data, (beta, _, _) = make_exact_dataset(n=400)
        lo, hi = subsample_ci(data, n_subsamples=15, seed=0)
        assert lo == pytest.approx(beta, abs=1e-8)
        assert hi == pytest.approx(beta, abs=1e-8)

    def test_recentering_flips_the_quantile_roles(self):
        data = generate_invalid_tcp_ocp_data(
            SimConfig(n=300, p_z=4, s_z=1, p_w=2, s_w=0, y_noise_sd=1.0), 1
        )
        raw = subsample_ci(data, n_subsamples=30, seed=5)
        pivot = subsample_ci(data, n_subsamples=30, seed=5, recenter=True)
        assert raw != pivot
        assert pivot[0] < pivot[1]

    def test_subsample_size_bounds_are_enforced(self):
        data = generate_invalid_tcp_ocp_data(
            SimConfig(n=300, p_z=4, s_z=1, p_w=2, s_w=0, y_noise_sd=1.0), 2
        )
        with pytest.raises(InvalidBound):
            subsample_ci(data, b=0, n_subsamples=5)
        with pytest.raises(InvalidBound):
            subsample_ci(data, b=300, n_subsamples=5)
        with pytest.raises(InvalidBound):
            subsample_ci(data, n_subsamples=0)


class TestBaselines:
    def test_ols_baseline_has_no_ocp_coefficient(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=300, p_z=4, s_z=1, y_noise_sd=1.0), 0
        )
        est = ols_baseline(data)
        assert math.isnan(est.gamma_hat)
        assert est.selected_invalid_tcps == ()

    def test_ols_baseline_matches_direct_regression(self):
        data = generate_invalid_tcp_data(
            SimConfig(n=300, p_z=4, s_z=1, y_noise_sd=1.0), 1
        )
        est = ols_baseline(data)
        design = np.column_stack([data.D, np.ones(data.n)])
        direct = np.linalg.lstsq(design, data.Y, rcond=None)[0]
        assert est.beta_hat == pytest.approx(float(direct[0]), rel=1e-10)

    def test_confounding_biases_ols_but_not_the_adaptive_pipeline(self):
        config = SimConfig(n=2000, p_z=10, s_z=3, reps=1, y_noise_sd=1.0)
        ols_err = []
        ad_err = []
        for rep in range(20):
            data = generate_invalid_tcp_data(config, rep)
            ols_err.append(ols_baseline(data).beta_hat - config.beta_true)
            ad_err.append(
                estimate_invalid_tcp(data).beta_hat - config.beta_true
            )
        assert abs(float(np.mean(ols_err))) > 0.02
        assert abs(float(np.mean(ad_err))) < 0.02

    def test_multi_ocp_naive_uses_every_column(self):
        data = generate_invalid_tcp_ocp_data(
            SimConfig(n=400, p_z=5, s_z=2, p_w=3, s_w=0, y_noise_sd=1.0), 3
        )
        joint = naive_p2sls(data, ocp_index=None)
        single = naive_p2sls(data, ocp_index=0)
        assert joint.beta_hat != single.beta_hat

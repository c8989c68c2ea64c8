"""OLS, mediator/outcome models and the effect decomposition."""

import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from survmediate import (
    EstimandKind,
    NoConfoundersWarning,
    RankDeficientError,
    build_risk_table,
    decompose_effects,
    fit_mediator_model,
    fit_outcome_model,
    if_pseudo,
    km_survival,
    ols_fit,
    rmst,
)
from survmediate.mediation import LinearFit
from survmediate.simlab import ScenarioConfig, simulate_trial

from conftest import make_sample


def fit_without_confounder_warning(pseudo, sample, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConfoundersWarning)
        return fit_outcome_model(pseudo, sample, **kwargs)


def synthetic_fit(names, coefficients, covariance=None) -> LinearFit:
    p = len(names)
    cov = np.zeros((p, p)) if covariance is None else np.asarray(covariance, float)
    return LinearFit(
        coefficients=np.asarray(coefficients, float),
        covariance_classical=cov,
        covariance_hc1=cov,
        residual_variance=0.0,
        n_obs=p + 1,
        regressor_names=tuple(names),
    )


class TestOlsFit:
    def test_exact_line_recovered(self):
        x = np.arange(6.0)
        design = np.column_stack([np.ones(6), x])
        fit = ols_fit(design, 2.0 * x, ["intercept", "x"])
        assert_allclose(fit.coefficients, [0.0, 2.0], atol=1e-12)
        assert fit.residual_variance == pytest.approx(0.0, abs=1e-20)

    def test_intercept_only_recovers_mean_of_pseudo_values(self):
        config = ScenarioConfig(n_per_arm=40, tau=2.0, seed=3)
        sample = simulate_trial(config)
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
        fit = ols_fit(np.ones((sample.n, 1)), pseudo.values, ["intercept"])
        assert fit.coefficient("intercept") == pytest.approx(pseudo.theta_hat, abs=1e-10)

    def test_five_point_normal_equations_by_hand(self):
        # x = 0..4, y = (1,3,2,5,4):
        #   slope = (5*38 - 10*15) / (5*30 - 100) = 0.8, intercept = 1.4
        #   rss = 3.6 -> sigma2 = 1.2, Var = sigma2 * [[0.6, -0.2], [-0.2, 0.1]]
        x = np.arange(5.0)
        y = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
        fit = ols_fit(np.column_stack([np.ones(5), x]), y, ["intercept", "x"])
        assert_allclose(fit.coefficients, [1.4, 0.8], atol=1e-12)
        assert fit.residual_variance == pytest.approx(1.2, abs=1e-12)
        assert fit.variance("intercept") == pytest.approx(0.72, abs=1e-12)
        assert fit.variance("x") == pytest.approx(0.12, abs=1e-12)
        assert fit.covariance_between("intercept", "x") == pytest.approx(-0.24, abs=1e-12)

    def test_rank_deficiency_rejected(self):
        design = np.column_stack([np.ones(8), np.arange(8.0), 2 * np.arange(8.0)])
        with pytest.raises(RankDeficientError, match="rank"):
            ols_fit(design, np.arange(8.0))

    def test_too_few_observations_rejected(self):
        with pytest.raises(ValueError, match="observations"):
            ols_fit(np.ones((2, 2)), np.ones(2))

    def test_hc1_computed_alongside_classical(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=40)
        design = np.column_stack([np.ones(40), x])
        y = 1.0 + x + rng.normal(size=40) * (1 + np.abs(x))
        fit = ols_fit(design, y)
        robust = ols_fit(design, y, robust=True)
        assert fit.covariance_kind == "classical"
        assert robust.covariance_kind == "hc1"
        assert_allclose(fit.coefficients, robust.coefficients)
        assert_allclose(fit.covariance_hc1, robust.covariance)
        assert not np.allclose(robust.covariance, fit.covariance)


class TestMediatorModel:
    def test_binary_regressor_identity(self):
        sample = make_sample(
            [1, 2, 3, 4], [1, 1, 1, 1], arm=[0, 0, 1, 1], mediator=[1.0, 3.0, 5.0, 9.0]
        )
        fit = fit_mediator_model(sample)
        assert fit.coefficient("arm") == pytest.approx(7.0 - 2.0, abs=1e-12)
        assert fit.coefficient("intercept") == pytest.approx(2.0, abs=1e-12)

    def test_recovers_mediator_shift(self):
        config = ScenarioConfig(n_per_arm=4000, tau=2.0, seed=5)
        sample = simulate_trial(config)
        fit = fit_mediator_model(sample)
        assert fit.coefficient("arm") == pytest.approx(-1.0, abs=0.1)

    def test_null_slope_within_noise(self):
        hits = 0
        seeds = 100
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            n = 80
            sample = make_sample(
                rng.exponential(2, n) + 0.1,
                np.ones(n, dtype=int),
                arm=np.arange(n) % 2,
                mediator=rng.normal(size=n),  # independent of arm
            )
            fit = fit_mediator_model(sample)
            se = np.sqrt(fit.variance("arm"))
            hits += abs(fit.coefficient("arm")) < 4 * se
        assert hits >= 0.95 * seeds


class TestOutcomeModel:
    def test_constant_response_zero_slopes(self):
        config = ScenarioConfig(n_per_arm=30, tau=2.0, seed=9)
        sample = simulate_trial(config)
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
        constant = type(pseudo)(
            values=np.full(sample.n, 0.4),
            estimand=pseudo.estimand,
            method=pseudo.method,
            theta_hat=0.4,
        )
        fit = fit_without_confounder_warning(constant, sample)
        assert fit.coefficient("arm") == pytest.approx(0.0, abs=1e-12)
        assert fit.coefficient("mediator") == pytest.approx(0.0, abs=1e-12)

    def test_missing_confounders_warns(self):
        config = ScenarioConfig(n_per_arm=20, tau=2.0, seed=11)
        sample = simulate_trial(config)
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
        with pytest.warns(NoConfoundersWarning):
            fit_outcome_model(pseudo, sample)

    def test_supplied_confounders_do_not_warn(self):
        config = ScenarioConfig(n_per_arm=20, tau=2.0, seed=11)
        sample = simulate_trial(config)
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
        rng = np.random.default_rng(1)
        with warnings.catch_warnings():
            warnings.simplefilter("error", NoConfoundersWarning)
            fit = fit_outcome_model(pseudo, sample, confounders=rng.normal(size=sample.n))
        assert "c0" in fit.regressor_names

    def test_interaction_rejected(self):
        config = ScenarioConfig(n_per_arm=20, tau=2.0, seed=11)
        sample = simulate_trial(config)
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
        with pytest.raises(ValueError, match="interaction"):
            fit_outcome_model(pseudo, sample, interaction=True)

    def test_uncensored_indicator_regression_is_linear_probability_model(self):
        rng = np.random.default_rng(21)
        n = 60
        time = np.round(rng.exponential(3, n), 1) + 0.1
        arm = np.arange(n) % 2
        sample = make_sample(time, np.ones(n, dtype=int), arm=arm)
        tau = 2.0
        pseudo = if_pseudo(sample, EstimandKind.survival_probability(tau))
        design = np.column_stack([np.ones(n), arm.astype(float)])
        fit = ols_fit(design, pseudo.values, ["intercept", "arm"])
        indicator = (time > tau).astype(float)
        slope = indicator[arm == 1].mean() - indicator[arm == 0].mean()
        assert fit.coefficient("arm") == pytest.approx(slope, abs=1e-12)

    def test_null_slopes_within_noise(self):
        hits_arm = hits_med = 0
        seeds = 60
        for seed in range(seeds):
            config = ScenarioConfig(n_per_arm=50, tau=2.0, seed=seed)
            sample = simulate_trial(config)
            pseudo = if_pseudo(sample, EstimandKind.survival_probability(2.0))
            fit = fit_without_confounder_warning(pseudo, sample)
            hits_arm += abs(fit.coefficient("arm")) < 4 * np.sqrt(fit.variance("arm"))
            hits_med += abs(fit.coefficient("mediator")) < 4 * np.sqrt(
                fit.variance("mediator")
            )
        assert hits_arm >= 0.95 * seeds
        assert hits_med >= 0.95 * seeds


class TestDecomposeEffects:
    def test_zero_mediator_slope_kills_nie(self):
        mediator_fit = synthetic_fit(["intercept", "arm"], [0.0, -2.3])
        outcome_fit = synthetic_fit(["intercept", "arm", "mediator"], [0.1, 0.4, 0.0])
        effects = decompose_effects(mediator_fit, outcome_fit)
        assert effects.nie == 0.0
        assert effects.te == effects.nde == 0.4

    def test_additive_decomposition_illustration(self):
        # structure of a published decomposition: 0.30 = 0.23 + (-1)(-0.07)
        mediator_fit = synthetic_fit(["intercept", "arm"], [0.0, -1.0])
        outcome_fit = synthetic_fit(["intercept", "arm", "mediator"], [0.5, 0.23, -0.07])
        effects = decompose_effects(mediator_fit, outcome_fit)
        assert effects.nie == pytest.approx(0.07, abs=1e-15)
        assert effects.te == pytest.approx(0.30, abs=1e-15)
        assert effects.prop_mediated == pytest.approx(0.07 / 0.30, abs=1e-12)

    def test_additivity_is_exact(self):
        rng = np.random.default_rng(33)
        for _ in range(200):
            a0, aa = rng.normal(size=2)
            b0, ba, bm = rng.normal(size=3)
            effects = decompose_effects(
                synthetic_fit(["intercept", "arm"], [a0, aa]),
                synthetic_fit(["intercept", "arm", "mediator"], [b0, ba, bm]),
            )
            assert effects.te - (effects.nde + effects.nie) == 0.0

    def test_zero_total_effect_leaves_prop_undefined(self):
        effects = decompose_effects(
            synthetic_fit(["intercept", "arm"], [0.0, 1.0]),
            synthetic_fit(["intercept", "arm", "mediator"], [0.0, 0.0, 0.0]),
        )
        assert np.isnan(effects.prop_mediated)


class TestRowOrderInvariance:
    def test_fits_invariant_to_permutation_and_id_relabeling(self):
        config = ScenarioConfig(n_per_arm=40, direct_effect=True, indirect_effect=True,
                                tau=2.0, seed=19)
        sample = simulate_trial(config)
        rng = np.random.default_rng(2)
        perm = rng.permutation(sample.n)
        shuffled = sample.subset(perm)
        relabeled = type(sample)(
            time=shuffled.time, status=shuffled.status, arm=shuffled.arm,
            mediator=shuffled.mediator, covariates=shuffled.covariates,
            ids=3 * np.arange(sample.n) + 17, n_causes=shuffled.n_causes,
        )
        estimand = EstimandKind.survival_probability(2.0)
        effects = []
        for data in (sample, relabeled):
            pseudo = if_pseudo(data, estimand)
            fit_m = fit_mediator_model(data)
            fit_y = fit_without_confounder_warning(pseudo, data)
            effects.append(decompose_effects(fit_m, fit_y))
        assert effects[0].nde == pytest.approx(effects[1].nde, abs=1e-12)
        assert effects[0].nie == pytest.approx(effects[1].nie, abs=1e-12)
        assert effects[0].te == pytest.approx(effects[1].te, abs=1e-12)


class TestTotalEffectCrossCheck:
    """Arm-only pseudo-value regression versus the unadjusted difference in
    arm-specific estimates, averaged over replicates."""

    @pytest.mark.parametrize("scale", ["surv", "rmst"])
    def test_te_matches_arm_difference_on_average(self, scale):
        config = ScenarioConfig(
            n_per_arm=50, direct_effect=True, indirect_effect=True, tau=2.0
        )
        estimand = EstimandKind(scale, 2.0)
        gaps = []
        for rep in range(1000):
            rng = np.random.default_rng(np.random.SeedSequence((99, rep)))
            from survmediate.simlab import _simulate_arrays

            sample = _simulate_arrays(config, rng)
            pseudo = if_pseudo(sample, estimand)
            design = np.column_stack([np.ones(sample.n), sample.arm.astype(float)])
            slope = ols_fit(design, pseudo.values, ["intercept", "arm"]).coefficient("arm")

            per_arm = []
            for arm in (0, 1):
                table = build_risk_table(sample.subset(np.flatnonzero(sample.arm == arm)))
                per_arm.append(
                    km_survival(table, 2.0) if scale == "surv" else rmst(table, 2.0)
                )
            gaps.append(slope - (per_arm[1] - per_arm[0]))
        assert abs(np.mean(gaps)) < 0.01

"""Delta-method, Sobel and bootstrap inference."""

import math
import warnings

import numpy as np
import pytest
import scipy.stats

from survmediate import (
    DegenerateResampleError,
    EstimandKind,
    NoConfoundersWarning,
    bootstrap_inference,
    delta_inference,
    fit_mediator_model,
    fit_outcome_model,
    if_pseudo,
    sobel_se,
)
from survmediate.inference import EFFECTS
from survmediate.simlab import ScenarioConfig, _simulate_arrays, simulate_trial

from conftest import make_sample
from test_mediation import synthetic_fit


def fits_for(sample, estimand):
    pseudo = if_pseudo(sample, estimand)
    mediator_fit = fit_mediator_model(sample)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NoConfoundersWarning)
        outcome_fit = fit_outcome_model(pseudo, sample)
    return mediator_fit, outcome_fit


def mediator_outcome_pair(alpha_arm, beta_arm, beta_med, v_alpha, v_beta_arm, v_beta_med):
    mediator_fit = synthetic_fit(
        ["intercept", "arm"], [0.0, alpha_arm], np.diag([0.01, v_alpha])
    )
    outcome_fit = synthetic_fit(
        ["intercept", "arm", "mediator"],
        [0.0, beta_arm, beta_med],
        np.diag([0.01, v_beta_arm, v_beta_med]),
    )
    return mediator_fit, outcome_fit


class TestSobel:
    def test_null_slopes_leave_product_term(self):
        v = 0.3
        fits = mediator_outcome_pair(0.0, 0.0, 0.0, v, 0.1, v)
        assert sobel_se(*fits) == pytest.approx(v, abs=1e-14)

    def test_zero_outcome_variance_reduction(self):
        fits = mediator_outcome_pair(2.0, 0.0, 0.7, 0.09, 0.1, 0.0)
        assert sobel_se(*fits) == pytest.approx(abs(0.7) * math.sqrt(0.09), abs=1e-14)

    def test_hand_value(self):
        fits = mediator_outcome_pair(-1.0, 0.0, 0.5, 0.04, 0.1, 0.01)
        # sqrt(1*0.01 + 0.25*0.04 + 0.0004) = sqrt(0.0204)
        assert sobel_se(*fits) == pytest.approx(math.sqrt(0.0204), abs=1e-14)

    def test_never_below_delta_se(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            alpha_arm, beta_med = rng.normal(size=2)
            v_alpha, v_beta_med = rng.uniform(0.001, 0.5, size=2)
            fits = mediator_outcome_pair(alpha_arm, 0.3, beta_med, v_alpha, 0.1, v_beta_med)
            delta = delta_inference(*fits)
            assert sobel_se(*fits) >= delta.se["nie"]
            through_flag = delta_inference(*fits, sobel_nie=True)
            assert through_flag.se["nie"] == pytest.approx(sobel_se(*fits), abs=1e-14)
            assert through_flag.method == "sobel"


class TestDelta:
    def test_degenerate_zero_variance(self):
        fits = mediator_outcome_pair(1.0, 0.4, 0.0, 0.0, 0.0, 0.0)
        result = delta_inference(*fits)
        assert result.se["nde"] == 0.0
        assert result.p_value["nde"] == 0.0  # nonzero estimate, zero noise
        assert result.p_value["nie"] == 1.0  # zero estimate, zero noise

    def test_te_variance_includes_cross_covariance(self):
        cov = np.array([[0.01, 0.0, 0.0], [0.0, 0.04, 0.012], [0.0, 0.012, 0.09]])
        outcome_fit = synthetic_fit(["intercept", "arm", "mediator"], [0.0, 0.3, 0.5], cov)
        mediator_fit = synthetic_fit(["intercept", "arm"], [0.0, -1.0], np.diag([0.0, 0.25]))
        result = delta_inference(mediator_fit, outcome_fit)
        expected = math.sqrt(0.04 + 1.0 * 0.09 + 2 * (-1.0) * 0.012 + 0.25 * 0.5**2)
        assert result.se["te"] == pytest.approx(expected, abs=1e-14)

    def test_widening_alpha_narrows_intervals(self):
        sample = simulate_trial(ScenarioConfig(n_per_arm=60, tau=2.0, seed=8))
        fits = fits_for(sample, EstimandKind.survival_probability(2.0))
        narrow = delta_inference(*fits, alpha=0.10)
        wide = delta_inference(*fits, alpha=0.05)
        for key in EFFECTS:
            assert (narrow.ci_upper[key] - narrow.ci_lower[key]) < (
                wide.ci_upper[key] - wide.ci_lower[key]
            )
            assert narrow.ci_lower[key] <= narrow.ci_upper[key]

    def test_null_p_values_uniform_and_nie_conservative(self):
        """Delta-method p-values under the no-effect scenario at N=50."""
        config = ScenarioConfig(n_per_arm=50, tau=2.0)
        estimand = EstimandKind.survival_probability(2.0)
        pvals = {k: [] for k in EFFECTS}
        for rep in range(2000):
            rng = np.random.default_rng(np.random.SeedSequence((123, rep)))
            sample = _simulate_arrays(config, rng)
            result = delta_inference(*fits_for(sample, estimand))
            for k in EFFECTS:
                pvals[k].append(result.p_value[k])
        for key in ("te", "nde"):
            ks = scipy.stats.kstest(pvals[key], "uniform")
            assert ks.pvalue > 0.01, f"{key} p-values not uniform (KS p={ks.pvalue:.4f})"
        # indirect-effect p-values may only err on the conservative side
        anti = scipy.stats.kstest(pvals["nie"], "uniform", alternative="greater")
        assert anti.pvalue > 0.01
        assert np.mean(np.asarray(pvals["nie"]) < 0.05) <= 0.062


class TestBootstrap:
    def test_reproducible_bit_for_bit(self):
        sample = simulate_trial(
            ScenarioConfig(n_per_arm=40, direct_effect=True, tau=2.0, seed=5)
        )
        estimand = EstimandKind.survival_probability(2.0)
        a = bootstrap_inference(sample, estimand, n_boot=150, seed=11)
        b = bootstrap_inference(sample, estimand, n_boot=150, seed=11)
        assert a == b  # frozen dataclasses with identical floats

    def test_minimum_replicates_enforced(self):
        sample = simulate_trial(ScenarioConfig(n_per_arm=20, tau=2.0, seed=1))
        with pytest.raises(ValueError, match="100"):
            bootstrap_inference(sample, EstimandKind.survival_probability(2.0), n_boot=50)

    def test_ci_widths_near_delta_widths(self):
        sample = simulate_trial(
            ScenarioConfig(
                n_per_arm=200, direct_effect=True, indirect_effect=True, tau=2.0, seed=17
            )
        )
        estimand = EstimandKind.survival_probability(2.0)
        boot = bootstrap_inference(sample, estimand, n_boot=1000, seed=3)
        delta = delta_inference(*fits_for(sample, estimand))
        for key in EFFECTS:
            boot_width = boot.ci_upper[key] - boot.ci_lower[key]
            delta_width = delta.ci_upper[key] - delta.ci_lower[key]
            assert boot_width == pytest.approx(delta_width, rel=0.15)

    def test_stratified_preserves_arm_counts_and_differs(self):
        sample = simulate_trial(
            ScenarioConfig(n_per_arm=50, direct_effect=True, tau=2.0, seed=23)
        )
        estimand = EstimandKind.survival_probability(2.0)
        plain = bootstrap_inference(sample, estimand, n_boot=150, seed=7)
        strat = bootstrap_inference(sample, estimand, n_boot=150, seed=7, stratified=True)
        assert plain.effects == strat.effects  # same point estimates
        assert plain.ci_lower != strat.ci_lower  # different resampling scheme
        assert "stratified" in strat.method

    def test_degenerate_resamples_redrawn_and_counted(self):
        # one control subject: ~1/3 of i.i.d. resamples lose that arm
        time = np.r_[5.0, np.linspace(1, 4, 9)]
        arm = np.r_[0, np.ones(9, dtype=int)]
        sample = make_sample(time, np.ones(10, dtype=int), arm=arm,
                             mediator=np.linspace(-1, 1, 10))
        estimand = EstimandKind.survival_probability(2.0)
        result = bootstrap_inference(sample, estimand, n_boot=120, seed=2)
        assert result.n_redraws > 0
        again = bootstrap_inference(sample, estimand, n_boot=120, seed=2)
        assert result == again

    def test_redraw_cap_raises(self, monkeypatch):
        # force every resample to look degenerate; the full-sample fit is fine
        sample = simulate_trial(ScenarioConfig(n_per_arm=20, tau=2.0, seed=41))
        from survmediate.survival import FollowupExceededError, SurvivalSample

        def always_unsupported(self, indices):
            raise FollowupExceededError("forced for test")

        monkeypatch.setattr(SurvivalSample, "subset", always_unsupported)
        with pytest.raises(DegenerateResampleError, match="redraws"):
            bootstrap_inference(sample, EstimandKind.survival_probability(2.0),
                                n_boot=100, seed=0)

    def test_bootstrap_se_concentrates_with_replicates(self):
        sample = simulate_trial(
            ScenarioConfig(n_per_arm=30, direct_effect=True, tau=2.0, seed=29)
        )
        estimand = EstimandKind.survival_probability(2.0)
        spread = {}
        for n_boot in (200, 800):
            ses = [
                bootstrap_inference(sample, estimand, n_boot=n_boot, seed=s).se["te"]
                for s in range(40)
            ]
            spread[n_boot] = np.std(ses, ddof=1)
        ratio = spread[200] / spread[800]
        assert 1.5 <= ratio <= 3.0

    def test_widening_alpha_narrows_percentile_intervals(self):
        sample = simulate_trial(
            ScenarioConfig(n_per_arm=40, direct_effect=True, tau=2.0, seed=37)
        )
        estimand = EstimandKind.survival_probability(2.0)
        tight = bootstrap_inference(sample, estimand, n_boot=200, seed=1, alpha=0.10)
        loose = bootstrap_inference(sample, estimand, n_boot=200, seed=1, alpha=0.05)
        for key in EFFECTS:
            assert (tight.ci_upper[key] - tight.ci_lower[key]) < (
                loose.ci_upper[key] - loose.ci_lower[key]
            )

    def test_jackknife_pseudo_variant_runs(self):
        sample = simulate_trial(ScenarioConfig(n_per_arm=25, tau=2.0, seed=31))
        estimand = EstimandKind.restricted_mean(2.0)
        result = bootstrap_inference(
            sample, estimand, n_boot=120, seed=5, pseudo_method="jackknife"
        )
        assert "jackknife" in result.method


@pytest.mark.slow
def test_bootstrap_null_rejection_near_level():
    """Empirical size of the bootstrap total-effect test under the null."""
    config = ScenarioConfig(n_per_arm=50, tau=2.0)
    estimand = EstimandKind.survival_probability(2.0)
    rejections = 0
    outer = 2000
    for rep in range(outer):
        rng = np.random.default_rng(np.random.SeedSequence((7000, rep)))
        sample = _simulate_arrays(config, rng)
        result = bootstrap_inference(sample, estimand, n_boot=199, seed=rep)
        rejections += result.p_value["te"] < 0.05
    rate = rejections / outer
    assert 0.03 <= rate <= 0.07, f"bootstrap size {rate:.4f}"

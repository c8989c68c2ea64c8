"""Standard errors, confidence intervals and p-values for the effects.

Three routes are provided:

* delta method: first-order Taylor variance for the indirect effect,
  ``se_nie^2 = alpha^2 V(beta_med) + beta_med^2 V(alpha)``, Wald normal
  intervals and two-sided p-values throughout; the total-effect variance
  combines the outcome-model block (including the arm/mediator coefficient
  covariance) with the independent mediator-model block;
* Sobel: same as the delta method except the indirect-effect standard error
  adds the product-of-variances term, so it is never smaller;
* bootstrap: resample subjects with replacement, recompute the pseudo-values
  on every resample (this matters; the influence-function generator keeps it
  cheap), refit both models, re-decompose, and read percentile intervals off
  the resampling distribution.

Degenerate resamples (single arm, no events, horizon beyond the resample's
follow-up, rank-deficient design) are redrawn and counted, with a hard stop
after 10x the requested replicates. Bootstrap runs are reproducible from the
seed: the stream for replicate b derives from (seed, b, attempt), so results
do not depend on scheduling.

When a standard error is exactly zero the p-value is taken as 1.0 for a zero
estimate and 0.0 otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .mediation import (
    LinearFit,
    MediationEffects,
    RankDeficientError,
    decompose_effects,
    fit_mediator_model,
    fit_outcome_model,
)
from .pseudo import (
    EstimandKind,
    JackknifeSupportError,
    if_pseudo,
    jackknife_pseudo,
)
from .survival import FollowupExceededError, SurvivalSample

__all__ = [
    "EFFECTS",
    "InferenceResult",
    "DegenerateResampleError",
    "sobel_se",
    "delta_inference",
    "bootstrap_inference",
]

EFFECTS = ("nde", "nie", "te")


class DegenerateResampleError(RuntimeError):
    """Too many bootstrap resamples were degenerate."""


@dataclass(frozen=True)
class InferenceResult:
    """Point estimates with per-effect standard errors, (1 - alpha)
    confidence limits and two-sided p-values, keyed by 'nde', 'nie', 'te'."""

    effects: MediationEffects
    se: dict
    ci_lower: dict
    ci_upper: dict
    p_value: dict
    method: str
    alpha: float
    covariance_kind: str = "classical"
    n_boot: int | None = None
    seed: int | None = None
    n_redraws: int = 0
    prop_mediated_ci: tuple | None = None
    prop_mediated_stable: bool | None = None

    def estimate(self, effect: str) -> float:
        return getattr(self.effects, effect)


def _two_sided_p(estimate: float, se: float) -> float:
    if se == 0.0:
        return 1.0 if estimate == 0.0 else 0.0
    return math.erfc(abs(estimate) / se / math.sqrt(2.0))


def _arm_stats(mediator_fit: LinearFit) -> tuple[float, float]:
    return mediator_fit.coefficient("arm"), mediator_fit.variance("arm")


def sobel_se(mediator_fit: LinearFit, outcome_fit: LinearFit) -> float:
    """Exact second-order standard error of the indirect effect:
    sqrt(a^2 V(b) + b^2 V(a) + V(a) V(b))."""
    alpha_arm, v_alpha = _arm_stats(mediator_fit)
    beta_med = outcome_fit.coefficient("mediator")
    v_beta_med = outcome_fit.variance("mediator")
    if v_alpha < 0 or v_beta_med < 0:
        raise ValueError("coefficient variances must be nonnegative")
    return math.sqrt(
        alpha_arm**2 * v_beta_med + beta_med**2 * v_alpha + v_alpha * v_beta_med
    )


def _stability(effects: MediationEffects, se_te: float) -> bool:
    # the ratio nie/te blows up near te = 0; only report it as stable when
    # the two effects agree in sign and the total clears its own noise level
    return (
        math.copysign(1.0, effects.nie) == math.copysign(1.0, effects.te)
        and abs(effects.te) > se_te
    )


def delta_inference(
    mediator_fit: LinearFit,
    outcome_fit: LinearFit,
    scale: EstimandKind | None = None,
    alpha: float = 0.05,
    sobel_nie: bool = False,
) -> InferenceResult:
    """Wald inference from the two fitted models.

    ``sobel_nie=True`` swaps the first-order indirect-effect standard error
    for the Sobel version (adds the product-of-variances term).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    effects = decompose_effects(mediator_fit, outcome_fit, scale)
    alpha_arm, v_alpha = _arm_stats(mediator_fit)
    beta_med = outcome_fit.coefficient("mediator")
    v_beta_arm = outcome_fit.variance("arm")
    v_beta_med = outcome_fit.variance("mediator")
    cov_arm_med = outcome_fit.covariance_between("arm", "mediator")

    se = {
        "nde": math.sqrt(v_beta_arm),
        "nie": sobel_se(mediator_fit, outcome_fit)
        if sobel_nie
        else math.sqrt(alpha_arm**2 * v_beta_med + beta_med**2 * v_alpha),
        # gradient of te w.r.t. (beta_arm, beta_med, alpha_arm) is
        # (1, alpha_arm, beta_med); the two model blocks are independent
        "te": math.sqrt(
            v_beta_arm
            + alpha_arm**2 * v_beta_med
            + 2.0 * alpha_arm * cov_arm_med
            + beta_med**2 * v_alpha
        ),
    }
    z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    est = {k: getattr(effects, k) for k in EFFECTS}
    return InferenceResult(
        effects=effects,
        se=se,
        ci_lower={k: est[k] - z * se[k] for k in EFFECTS},
        ci_upper={k: est[k] + z * se[k] for k in EFFECTS},
        p_value={k: _two_sided_p(est[k], se[k]) for k in EFFECTS},
        method="sobel" if sobel_nie else "delta",
        alpha=alpha,
        covariance_kind=outcome_fit.covariance_kind,
        prop_mediated_stable=_stability(effects, se["te"]),
    )


def _fit_effects(
    sample: SurvivalSample,
    estimand: EstimandKind,
    confounders,
    pseudo_method: str,
    robust: bool,
) -> tuple[LinearFit, LinearFit, MediationEffects]:
    generate = jackknife_pseudo if pseudo_method == "jackknife" else if_pseudo
    pseudo = generate(sample, estimand)
    mediator_fit = fit_mediator_model(sample, robust=robust)
    outcome_fit = fit_outcome_model(
        pseudo, sample, confounders=confounders, robust=robust
    )
    return mediator_fit, outcome_fit, decompose_effects(mediator_fit, outcome_fit, estimand)


def bootstrap_inference(
    sample: SurvivalSample,
    estimand: EstimandKind,
    confounders=None,
    n_boot: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    pseudo_method: str = "influence",
    stratified: bool = False,
    robust: bool = False,
) -> InferenceResult:
    """Percentile bootstrap over subjects, recomputing pseudo-values per
    resample.

    ``stratified=True`` resamples within each arm, preserving the arm
    counts (useful for heavily unbalanced designs); the default resamples
    all subjects i.i.d. P-values are sign-crossing fractions with a +1
    continuity correction.
    """
    if n_boot < 100:
        raise ValueError("bootstrap needs at least 100 replicates")
    if pseudo_method not in ("influence", "jackknife"):
        raise ValueError(f"unknown pseudo method {pseudo_method!r}")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")

    mediator_fit, outcome_fit, effects = _fit_effects(
        sample, estimand, confounders, pseudo_method, robust
    )
    conf_arr = None if confounders is None else np.asarray(confounders, dtype=np.float64)

    n = sample.n
    arm0 = np.flatnonzero(sample.arm == 0)
    arm1 = np.flatnonzero(sample.arm == 1)
    draws = {k: np.empty(n_boot) for k in EFFECTS}
    prop_draws = np.empty(n_boot)
    redraws = 0
    max_redraws = 10 * n_boot
    for b in range(n_boot):
        attempt = 0
        while True:
            rng = np.random.default_rng(np.random.SeedSequence((seed, b, attempt)))
            if stratified:
                idx = np.concatenate(
                    [rng.choice(arm0, arm0.size), rng.choice(arm1, arm1.size)]
                )
            else:
                idx = rng.integers(0, n, n)
            ok = sample.status[idx].max() >= 1 and 0 < sample.arm[idx].sum() < n
            if ok:
                try:
                    resample = sample.subset(idx)
                    sub_conf = None if conf_arr is None else conf_arr[idx]
                    _, _, eff = _fit_effects(
                        resample, estimand, sub_conf, pseudo_method, robust
                    )
                    break
                except (
                    FollowupExceededError,
                    JackknifeSupportError,
                    RankDeficientError,
                ):
                    pass
            redraws += 1
            attempt += 1
            if redraws > max_redraws:
                raise DegenerateResampleError(
                    f"exceeded {max_redraws} degenerate-resample redraws "
                    f"(last at replicate {b}); data too sparse to bootstrap"
                )
        for k in EFFECTS:
            draws[k][b] = getattr(eff, k)
        prop_draws[b] = eff.prop_mediated

    lo_q, hi_q = 100.0 * alpha / 2.0, 100.0 * (1.0 - alpha / 2.0)
    se = {k: float(np.std(draws[k], ddof=1)) for k in EFFECTS}
    ci_lower = {k: float(np.percentile(draws[k], lo_q)) for k in EFFECTS}
    ci_upper = {k: float(np.percentile(draws[k], hi_q)) for k in EFFECTS}
    p_value = {}
    for k in EFFECTS:
        at_most = float(np.sum(draws[k] <= 0.0))
        at_least = float(np.sum(draws[k] >= 0.0))
        p = 2.0 * (1.0 + min(at_most, at_least)) / (n_boot + 1.0)
        p_value[k] = min(1.0, p)
    finite_prop = prop_draws[np.isfinite(prop_draws)]
    prop_ci = (
        (float(np.percentile(finite_prop, lo_q)), float(np.percentile(finite_prop, hi_q)))
        if finite_prop.size
        else None
    )
    return InferenceResult(
        effects=effects,
        se=se,
        ci_lower=ci_lower,
        ci_upper=ci_upper,
        p_value=p_value,
        method=f"bootstrap(percentile, B={n_boot}, {pseudo_method} pseudo-values"
        + (", arm-stratified)" if stratified else ")"),
        alpha=alpha,
        covariance_kind=outcome_fit.covariance_kind,
        n_boot=n_boot,
        seed=seed,
        n_redraws=redraws,
        prop_mediated_ci=prop_ci,
        prop_mediated_stable=_stability(effects, se["te"]),
    )

"""Causal mediation analysis for time-to-event outcomes via pseudo-values.

Turns censored survival data into per-subject pseudo-values for a chosen
estimand (survival probability, restricted mean survival time, or a
cumulative incidence under competing risks), fits ordinary linear models for
the mediator and the pseudo-value outcome, and decomposes the treatment
effect into natural direct and indirect components with bootstrap, Sobel or
delta-method inference. A simulation laboratory with closed-form and
quadrature truth oracles validates the operating characteristics.
"""

from ._backend import backend_name
from .inference import (
    DegenerateResampleError,
    InferenceResult,
    bootstrap_inference,
    delta_inference,
    sobel_se,
)
from .mediation import (
    LinearFit,
    MediationEffects,
    NoConfoundersWarning,
    RankDeficientError,
    decompose_effects,
    fit_mediator_model,
    fit_outcome_model,
    ols_fit,
)
from .pseudo import (
    AgreementReport,
    EstimandKind,
    JackknifeSupportError,
    PseudoValueSet,
    if_pseudo,
    jackknife_pseudo,
    pseudo_agreement,
)
from .simlab import (
    BenchResult,
    CellResult,
    ScenarioConfig,
    TrueEffects,
    pseudo_runtime_benchmark,
    run_operating_characteristics,
    simulate_competing,
    simulate_trial,
    true_effects,
)
from .survival import (
    FollowupExceededError,
    RiskTable,
    StepCurve,
    SurvivalSample,
    aalen_johansen_cif,
    build_risk_table,
    km_curve,
    km_survival,
    nelson_aalen_increments,
    rmst,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend_name",
    # survival core
    "FollowupExceededError",
    "SurvivalSample",
    "RiskTable",
    "StepCurve",
    "build_risk_table",
    "km_survival",
    "km_curve",
    "rmst",
    "nelson_aalen_increments",
    "aalen_johansen_cif",
    # pseudo-values
    "EstimandKind",
    "PseudoValueSet",
    "AgreementReport",
    "JackknifeSupportError",
    "jackknife_pseudo",
    "if_pseudo",
    "pseudo_agreement",
    # mediation
    "LinearFit",
    "MediationEffects",
    "RankDeficientError",
    "NoConfoundersWarning",
    "ols_fit",
    "fit_mediator_model",
    "fit_outcome_model",
    "decompose_effects",
    # inference
    "InferenceResult",
    "DegenerateResampleError",
    "sobel_se",
    "delta_inference",
    "bootstrap_inference",
    # simulation lab
    "ScenarioConfig",
    "TrueEffects",
    "CellResult",
    "BenchResult",
    "simulate_trial",
    "simulate_competing",
    "true_effects",
    "run_operating_characteristics",
    "pseudo_runtime_benchmark",
]

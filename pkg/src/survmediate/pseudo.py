"""Per-subject pseudo-values for survival estimands.

For an estimand ``theta`` (survival probability, restricted mean, or one
cumulative incidence, each at a horizon ``tau``), the pseudo-value of
subject i is

    Y_i = n * theta_hat - (n - 1) * theta_hat_without_i,

the jackknife contrast of the full-sample plug-in estimate against the
leave-one-out estimate. Pseudo-values behave like a continuous response:
their mean recovers the full-sample estimate and, once computed, they can be
fed to ordinary regression.

Two generators are provided. :func:`jackknife_pseudo` evaluates the
definition directly by recomputing the estimator n times, which costs
O(n^2) once the sample is aggregated into event rows. :func:`if_pseudo`
instead adds each subject's influence contribution to the full-sample
estimate, ``Y_i ~= theta_hat + phi_i``, in a single O(n log n) pass; the
contributions are the exact directional derivatives of the plug-in
estimators, built from plug-in martingale increments
``dM_i(t) = dN_i(t) - Y_i(t) dA(t)`` (Kaplan-Meier for the survival curve,
Nelson-Aalen increments for the hazards, empirical at-risk fractions for
the denominators). Because the martingale increments sum to zero at every
event row, the influence-function pseudo-values average exactly to the
full-sample estimate; without censoring both generators reduce exactly to
the per-subject summands (event indicator, truncated time, cause
indicator).

Pseudo-values may fall outside [0, 1] even for probability estimands; that
is expected, not an error. All functions are pure and deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .survival import (
    RiskTable,
    SurvivalSample,
    aalen_johansen_cif,
    build_risk_table,
    km_survival,
    rmst,
)

__all__ = [
    "EstimandKind",
    "PseudoValueSet",
    "AgreementReport",
    "JackknifeSupportError",
    "jackknife_pseudo",
    "if_pseudo",
    "pseudo_agreement",
]

logger = logging.getLogger(__name__)

_KINDS = ("surv", "rmst", "cif")


class JackknifeSupportError(ValueError):
    """Raised when a leave-one-out subsample no longer covers the horizon."""


@dataclass(frozen=True)
class EstimandKind:
    """Which functional of the event-time distribution is targeted, and at
    which horizon: ``surv`` (survival probability), ``rmst`` (restricted
    mean), or ``cif`` (cumulative incidence of ``cause``)."""

    kind: str
    tau: float
    cause: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.kind == "cif":
            if self.cause is None or int(self.cause) < 1:
                raise ValueError("cif estimand needs a cause >= 1")
            object.__setattr__(self, "cause", int(self.cause))
        elif self.cause is not None:
            raise ValueError(f"{self.kind} estimand takes no cause")
        object.__setattr__(self, "tau", float(self.tau))

    @classmethod
    def survival_probability(cls, tau: float) -> "EstimandKind":
        return cls("surv", tau)

    @classmethod
    def restricted_mean(cls, tau: float) -> "EstimandKind":
        return cls("rmst", tau)

    @classmethod
    def cumulative_incidence(cls, tau: float, cause: int = 1) -> "EstimandKind":
        return cls("cif", tau, cause)

    @classmethod
    def parse(cls, spec: str, tau: float) -> "EstimandKind":
        """Parse CLI-style names: ``surv``, ``rmst``, ``cif`` or ``cif:<j>``."""
        spec = spec.strip().lower()
        if spec.startswith("cif"):
            _, _, suffix = spec.partition(":")
            return cls("cif", tau, int(suffix) if suffix else 1)
        return cls(spec, tau)

    @property
    def label(self) -> str:
        if self.kind == "cif":
            return f"cif:{self.cause}"
        return self.kind


@dataclass(frozen=True, eq=False)
class PseudoValueSet:
    """Pseudo-values for one estimand, aligned with the sample's subject
    order, plus the full-sample estimate they are anchored to."""

    values: np.ndarray
    estimand: EstimandKind
    method: str  # "jackknife" or "influence"
    theta_hat: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "theta_hat", float(self.theta_hat))

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AgreementReport:
    r_squared: float
    max_abs_diff: float


def _theta(table: RiskTable, estimand: EstimandKind) -> float:
    if estimand.kind == "surv":
        return km_survival(table, estimand.tau)
    if estimand.kind == "rmst":
        return rmst(table, estimand.tau)
    return aalen_johansen_cif(table, estimand.cause, estimand.tau)


def _check_estimand(sample: SurvivalSample, estimand: EstimandKind) -> None:
    if estimand.kind == "cif" and estimand.cause > sample.n_causes:
        raise ValueError(
            f"cause {estimand.cause} not present; sample has {sample.n_causes} cause(s)"
        )


def _subject_rows(sample: SurvivalSample, table: RiskTable):
    if table.subject_rows_within is not None:
        return table.subject_rows_within, table.subject_event_row
    rows_le = np.searchsorted(table.event_times, sample.time, side="right").astype(
        np.int64
    )
    row_of = np.where(sample.status >= 1, rows_le - 1, np.int64(-1)).astype(np.int64)
    return rows_le, row_of


def _precheck(sample: SurvivalSample, estimand: EstimandKind) -> RiskTable:
    _check_estimand(sample, estimand)
    if sample.n < 2:
        raise ValueError("pseudo-values need at least 2 subjects")
    if sample.n == 2:
        logger.warning(
            "pseudo-values from n=2 subjects have extreme leverage; "
            "interpret downstream fits with caution"
        )
    return build_risk_table(sample)


def jackknife_pseudo(sample: SurvivalSample, estimand: EstimandKind) -> PseudoValueSet:
    """Exact leave-one-out pseudo-values, n * theta - (n-1) * theta_without_i.

    Each leave-one-out estimate is recomputed over the subsample's risk rows.
    Raises :class:`JackknifeSupportError` when removing the longest-followed
    subject would leave the horizon beyond the subsample's follow-up, since
    silently truncating the horizon would change the estimand.
    """
    table = _precheck(sample, estimand)
    theta = _theta(table, estimand)
    n = sample.n
    second_largest = np.partition(sample.time, n - 2)[n - 2]
    if estimand.tau > second_largest:
        raise JackknifeSupportError(
            f"tau={estimand.tau} exceeds follow-up {second_largest} of the "
            "subsample left after removing the longest-followed subject"
        )
    rows_le, row_of = _subject_rows(sample, table)
    args = (table.event_times, table._at_risk_f, table._d_all_f)
    if estimand.kind == "surv":
        loo = kernels.loo_survival(*args, rows_le, row_of, estimand.tau)
    elif estimand.kind == "rmst":
        loo = kernels.loo_rmst(*args, rows_le, row_of, estimand.tau)
    else:
        is_cause = (sample.status == estimand.cause).astype(np.uint8)
        loo = kernels.loo_cif(
            *args, table._d_cause_f(estimand.cause), rows_le, row_of, is_cause,
            estimand.tau,
        )
    values = n * theta - (n - 1) * loo
    return PseudoValueSet(values=values, estimand=estimand, method="jackknife", theta_hat=theta)


def if_pseudo(sample: SurvivalSample, estimand: EstimandKind) -> PseudoValueSet:
    """Influence-function pseudo-values, theta_hat + phi_i per subject.

    The contributions phi_i sum to zero by construction, so the values
    average exactly to the full-sample estimate.
    """
    table = _precheck(sample, estimand)
    theta = _theta(table, estimand)
    rows_le, row_of = _subject_rows(sample, table)
    args = (table.event_times, table._at_risk_f, table._d_all_f)
    if estimand.kind == "surv":
        phi = kernels.if_phi_survival(*args, rows_le, row_of, estimand.tau)
    elif estimand.kind == "rmst":
        phi = kernels.if_phi_rmst(*args, rows_le, row_of, estimand.tau)
    else:
        is_cause = (sample.status == estimand.cause).astype(np.uint8)
        phi = kernels.if_phi_cif(
            *args, table._d_cause_f(estimand.cause), rows_le, row_of, is_cause,
            estimand.tau,
        )
    return PseudoValueSet(
        values=theta + phi, estimand=estimand, method="influence", theta_hat=theta
    )


def pseudo_agreement(a: PseudoValueSet, b: PseudoValueSet) -> AgreementReport:
    """R-squared and largest elementwise gap between two pseudo-value sets
    for the same subjects and estimand."""
    if a.n != b.n:
        raise ValueError(f"pseudo-value sets differ in length ({a.n} vs {b.n})")
    if a.estimand != b.estimand:
        raise ValueError(
            f"pseudo-value sets target different estimands "
            f"({a.estimand.label}@{a.estimand.tau} vs {b.estimand.label}@{b.estimand.tau})"
        )
    x = a.values
    y = b.values
    max_abs_diff = float(np.max(np.abs(x - y)))
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        # degenerate regression; identical constants agree perfectly
        r2 = 1.0 if max_abs_diff == 0.0 else 0.0
    else:
        r2 = float(np.corrcoef(x, y)[0, 1] ** 2)
    return AgreementReport(r_squared=r2, max_abs_diff=max_abs_diff)

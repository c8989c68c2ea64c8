"""Nonparametric survival estimation from right-censored data.

Estimators are computed from a counting-process view of the sample: ordered
distinct event times with per-cause event counts and at-risk counts. Three
estimands are supported, all at a fixed horizon ``tau``:

* survival probability, by the Kaplan-Meier product limit
  ``S(tau) = prod_{t_k <= tau} (1 - d_k / y_k)`` over all-cause events;
* restricted mean survival time, the exact area under the Kaplan-Meier step
  curve on ``[0, tau]``;
* cause-specific cumulative incidence under competing risks, by the
  Aalen-Johansen sum ``F_j(tau) = sum_{t_k <= tau} S(t_k-) d_{jk} / y_k``.

Conventions: ties at one time are aggregated into a single row; censoring
tied with an event at the same time is processed after the event (a subject
censored at an event time still counts as at risk there); estimates at a
horizon beyond the largest observed time are a hard error rather than an
extrapolation; when the largest time is censored the survival curve plateaus
above zero with no tail correction.

All operations are pure functions of immutable inputs and are safe to call
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._backend import kernels

__all__ = [
    "FollowupExceededError",
    "SurvivalSample",
    "RiskTable",
    "StepCurve",
    "build_risk_table",
    "km_survival",
    "rmst",
    "nelson_aalen_increments",
    "aalen_johansen_cif",
]


class FollowupExceededError(ValueError):
    """Raised when a horizon lies outside the observed follow-up range."""


def _as_float1d(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr


@dataclass(frozen=True, eq=False)
class SurvivalSample:
    """Per-subject survival data: follow-up time, event status, treatment
    arm, mediator value and optional confounder columns.

    ``status`` uses 0 for censoring and j >= 1 for a terminal event of
    cause j. When ``n_causes`` is not given it is inferred as the largest
    status code and the observed causes must then cover 1..J with no gaps;
    passing ``n_causes`` explicitly (as :meth:`subset` does) only requires
    codes to stay within range, so resamples may miss a cause entirely.
    """

    time: np.ndarray
    status: np.ndarray
    arm: np.ndarray
    mediator: np.ndarray
    covariates: np.ndarray = field(default=None)  # type: ignore[assignment]
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]
    n_causes: int = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        time = _as_float1d(self.time, "time")
        n = time.shape[0]
        if n == 0:
            raise ValueError("sample is empty")
        status = np.asarray(self.status)
        if status.shape != (n,):
            raise ValueError("status must align with time")
        if not np.all(status == np.floor(status)):
            raise ValueError("status codes must be integers")
        status = status.astype(np.int64)
        arm = np.asarray(self.arm)
        if arm.shape != (n,):
            raise ValueError("arm must align with time")
        arm = arm.astype(np.int64)
        mediator = _as_float1d(self.mediator, "mediator")
        if mediator.shape != (n,):
            raise ValueError("mediator must align with time")
        covariates = self.covariates
        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.asarray(covariates, dtype=np.float64)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.shape[0] != n:
            raise ValueError("covariates must align with time")
        ids = self.ids
        if ids is None:
            ids = np.arange(n)
        ids = np.asarray(ids)
        if ids.shape[0] != n:
            raise ValueError("ids must align with time")

        if not np.all(np.isfinite(time)) or np.any(time < 0):
            raise ValueError("times must be finite and nonnegative")
        if not np.all(np.isfinite(mediator)):
            raise ValueError("mediator contains missing or non-finite values")
        if covariates.size and not np.all(np.isfinite(covariates)):
            raise ValueError("covariates contain missing or non-finite values")
        if arm.size and (arm.min() < 0 or arm.max() > 1):
            raise ValueError("arm must be binary (0/1)")
        if np.any(status < 0):
            raise ValueError("status codes must be nonnegative")
        observed_max = int(status.max(initial=0))
        if observed_max < 1:
            raise ValueError("sample has no events (all subjects censored)")
        n_causes = self.n_causes
        if n_causes is None:
            n_causes = observed_max
            observed = set(np.unique(status).tolist()) - {0}
            if observed != set(range(1, n_causes + 1)):
                raise ValueError(
                    f"status codes must cover causes 1..{n_causes} with no gaps; "
                    f"observed {sorted(observed)}"
                )
        else:
            n_causes = int(n_causes)
            if n_causes < 1:
                raise ValueError("n_causes must be >= 1")
            if observed_max > n_causes:
                raise ValueError(
                    f"status code {observed_max} exceeds declared n_causes={n_causes}"
                )

        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "arm", arm)
        object.__setattr__(self, "mediator", mediator)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "n_causes", n_causes)

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def max_followup(self) -> float:
        return float(self.time.max())

    def subset(self, indices) -> "SurvivalSample":
        """Row subset / resample; keeps the parent's declared cause count.

        Rows of a validated sample stay individually valid, so only the
        sample-level invariant (at least one event) is rechecked.
        """
        idx = np.asarray(indices)
        status = self.status[idx]
        if status.size == 0 or status.max() < 1:
            raise ValueError("sample has no events (all subjects censored)")
        out = object.__new__(SurvivalSample)
        object.__setattr__(out, "time", self.time[idx])
        object.__setattr__(out, "status", status)
        object.__setattr__(out, "arm", self.arm[idx])
        object.__setattr__(out, "mediator", self.mediator[idx])
        object.__setattr__(out, "covariates", self.covariates[idx])
        object.__setattr__(out, "ids", self.ids[idx])
        object.__setattr__(out, "n_causes", self.n_causes)
        return out


@dataclass(frozen=True, eq=False)
class RiskTable:
    """Aggregated counting-process view of a sample.

    ``event_times`` are the strictly increasing distinct times with at least
    one event of any cause; ``event_counts[j-1, k]`` is the number of cause-j
    events at row k and ``at_risk[k]`` the number of subjects under
    observation just before that time.

    ``subject_rows_within`` / ``subject_event_row`` are per-subject lookups
    (count of rows at or before each subject's follow-up time; index of the
    subject's own event row, -1 if censored) cached by
    :func:`build_risk_table` for the pseudo-value kernels; they are None
    when a table is assembled by hand.
    """

    event_times: np.ndarray
    event_counts: np.ndarray
    at_risk: np.ndarray
    n: int
    max_followup: float
    subject_rows_within: np.ndarray | None = None
    subject_event_row: np.ndarray | None = None

    @property
    def n_causes(self) -> int:
        return self.event_counts.shape[0]

    @cached_property
    def all_cause_counts(self) -> np.ndarray:
        return self.event_counts.sum(axis=0)

    # float views used by the kernels
    @cached_property
    def _at_risk_f(self) -> np.ndarray:
        return self.at_risk.astype(np.float64)

    @cached_property
    def _d_all_f(self) -> np.ndarray:
        return self.all_cause_counts.astype(np.float64)

    def _d_cause_f(self, cause: int) -> np.ndarray:
        return self.event_counts[cause - 1].astype(np.float64)


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous step function given by knot times and post-knot
    values, with a constant level before the first knot."""

    knots: np.ndarray
    values: np.ndarray
    baseline: float

    def __post_init__(self):
        knots = _as_float1d(self.knots, "knots")
        values = _as_float1d(self.values, "values")
        if knots.shape != values.shape:
            raise ValueError("knots and values must align")
        if knots.size and np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "baseline", float(self.baseline))

    def value_at(self, t):
        """Evaluate the curve at (scalar or array) times, right-continuously."""
        idx = np.searchsorted(self.knots, t, side="right")
        levels = np.concatenate([[self.baseline], self.values])
        out = levels[idx]
        return float(out) if np.isscalar(t) else out

    @property
    def jumps(self) -> np.ndarray:
        """Increment of the curve at each knot."""
        return np.diff(np.concatenate([[self.baseline], self.values]))


def build_risk_table(sample: SurvivalSample) -> RiskTable:
    """Aggregate a sample into event rows with at-risk and event counts.

    Everything derives from one stable sort of the follow-up times: runs of
    equal sorted times become candidate rows, rows without events are
    dropped, and the at-risk count at a row is the number of subjects from
    its first sorted position onward (so a subject censored exactly at an
    event time still counts as at risk there).
    """
    time = sample.time
    status = sample.status
    n = sample.n
    # run aggregation only reads sorted values, so sort stability is moot
    order = np.argsort(time)
    sorted_time = time[order]
    sorted_status = status[order]

    starts_run = np.empty(n, dtype=bool)
    starts_run[0] = True
    np.not_equal(sorted_time[1:], sorted_time[:-1], out=starts_run[1:])
    run_id = np.cumsum(starts_run) - 1
    run_start = np.flatnonzero(starts_run)
    n_runs = run_start.shape[0]

    sorted_is_event = sorted_status >= 1
    run_has_event = np.zeros(n_runs, dtype=bool)
    run_has_event[run_id[sorted_is_event]] = True
    event_runs = np.flatnonzero(run_has_event)
    k = event_runs.shape[0]

    event_times = sorted_time[run_start[event_runs]]
    at_risk = (n - run_start[event_runs]).astype(np.int64)

    # row index per run (valid only for event runs); rows_within counts event
    # rows with time <= each subject's follow-up time
    rows_within_run = np.cumsum(run_has_event)
    row_of_run = rows_within_run - 1
    n_causes = sample.n_causes
    flat = np.zeros(0, dtype=np.int64)
    if k:
        event_rows_sorted = row_of_run[run_id[sorted_is_event]]
        flat = np.bincount(
            (sorted_status[sorted_is_event] - 1) * k + event_rows_sorted,
            minlength=n_causes * k,
        )
    counts = flat.reshape(n_causes, k)

    rows_within = np.empty(n, dtype=np.int64)
    rows_within[order] = rows_within_run[run_id]
    event_row = np.where(sample.status >= 1, rows_within - 1, np.int64(-1))

    return RiskTable(
        event_times=event_times,
        event_counts=counts,
        at_risk=at_risk,
        n=n,
        max_followup=float(sorted_time[-1]),
        subject_rows_within=rows_within,
        subject_event_row=event_row,
    )


def _check_tau(table: RiskTable, tau: float) -> float:
    tau = float(tau)
    if not np.isfinite(tau) or tau < 0:
        raise FollowupExceededError(f"tau must be a finite nonnegative time, got {tau}")
    if tau > table.max_followup:
        raise FollowupExceededError(
            f"tau={tau} exceeds the largest observed time {table.max_followup}; "
            "the estimand is not identified beyond follow-up"
        )
    return tau


def km_survival(table: RiskTable, tau: float) -> float:
    """Kaplan-Meier survival probability at ``tau`` using all-cause events."""
    tau = _check_tau(table, tau)
    return kernels.km_at(table.event_times, table._at_risk_f, table._d_all_f, tau)


def rmst(table: RiskTable, tau: float) -> float:
    """Restricted mean survival time: exact area under the Kaplan-Meier step
    curve on [0, tau], accumulated rectangle by rectangle."""
    tau = _check_tau(table, tau)
    return kernels.rmst_at(table.event_times, table._at_risk_f, table._d_all_f, tau)


def _check_cause(table: RiskTable, cause: int) -> int:
    cause = int(cause)
    if not 1 <= cause <= table.n_causes:
        raise ValueError(f"cause must be in 1..{table.n_causes}, got {cause}")
    return cause


def nelson_aalen_increments(table: RiskTable, cause: int | None = None) -> StepCurve:
    """Cumulative hazard step curve with plug-in increments d_k / y_k.

    ``cause=None`` pools all causes; otherwise increments count only cause-j
    events. The per-row increments are available as ``.jumps``.
    """
    if cause is None:
        d = table._d_all_f
    else:
        d = table._d_cause_f(_check_cause(table, cause))
    if np.any(table.at_risk <= 0):
        raise ValueError("risk table contains an event row with nobody at risk")
    increments = d / table._at_risk_f
    return StepCurve(
        knots=table.event_times, values=np.cumsum(increments), baseline=0.0
    )


def aalen_johansen_cif(table: RiskTable, cause: int, tau: float) -> float:
    """Aalen-Johansen cumulative incidence of a cause-j event by ``tau``."""
    cause = _check_cause(table, cause)
    tau = _check_tau(table, tau)
    return kernels.cif_at(
        table.event_times, table._at_risk_f, table._d_all_f, table._d_cause_f(cause), tau
    )


def km_curve(table: RiskTable) -> StepCurve:
    """Full Kaplan-Meier step curve over all event rows."""
    factors = 1.0 - table._d_all_f / table._at_risk_f
    return StepCurve(
        knots=table.event_times, values=np.cumprod(factors), baseline=1.0
    )

"""Pure numpy kernels for survival estimators and pseudo-value generation.

This module is the portable fallback for the compiled extension
``survmediate._kernels``; both expose the same functions and must agree to
floating-point roundoff (see tests/test_backends.py).

All kernels operate on an aggregated event-row representation built once per
sample:

``times``
    strictly increasing distinct times with at least one event of any cause,
``at_risk``
    number of subjects under observation just before each row's time,
``d_all`` / ``d_cause``
    all-cause and cause-specific event counts per row,

plus two per-subject index arrays derived from the follow-up times:

``rows_le[i]``
    number of rows with time <= subject i's follow-up time,
``row_of[i]``
    index of the row at which subject i had its event, -1 if censored.

Ties are pre-aggregated into rows and censoring at an event time counts as
at risk for that row (event processed before censoring).

Influence-function pseudo-values implement the exact directional derivative
of each plug-in estimator at the empirical distribution, which keeps the
per-subject contributions summing to zero at every event row and makes the
uncensored case reduce exactly to the per-subject summand.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _rows_within(times: np.ndarray, tau: float) -> int:
    return int(np.searchsorted(times, tau, side="right"))


def km_at(times, at_risk, d_all, tau):
    """Kaplan-Meier survival probability at ``tau`` (all-cause events)."""
    k = _rows_within(times, tau)
    if k == 0:
        return 1.0
    return float(np.prod(1.0 - d_all[:k] / at_risk[:k]))


def rmst_at(times, at_risk, d_all, tau):
    """Area under the Kaplan-Meier step curve on [0, tau]."""
    k = _rows_within(times, tau)
    if k == 0:
        return float(tau)
    surv = np.cumprod(1.0 - d_all[:k] / at_risk[:k])
    widths = np.diff(np.concatenate([times[:k], [tau]]))
    return float(times[0] + np.sum(surv * widths))


def cif_at(times, at_risk, d_all, d_cause, tau):
    """Aalen-Johansen cumulative incidence for one cause at ``tau``."""
    k = _rows_within(times, tau)
    if k == 0:
        return 0.0
    surv = np.cumprod(1.0 - d_all[:k] / at_risk[:k])
    surv_before = np.concatenate([[1.0], surv[:-1]])
    return float(np.sum(surv_before * d_cause[:k] / at_risk[:k]))


def _own_row_mask(row_of: np.ndarray, k: int):
    has_row = (row_of >= 0) & (row_of < k)
    idx = np.where(has_row, row_of, 0)
    return has_row, idx


def if_phi_survival(times, at_risk, d_all, rows_le, row_of, tau):
    """Per-subject influence contributions for the survival probability."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    if k == 0:
        return np.zeros(n)
    d = d_all[:k]
    y = at_risk[:k]
    factors = 1.0 - d / y
    # excl[j] = product of all factors except j (prefix * suffix), which stays
    # finite when the final row wipes out the at-risk set (factor == 0).
    cp = np.cumprod(factors)
    prefix = np.concatenate([[1.0], cp[:-1]])
    suffix = np.concatenate([np.cumprod(factors[::-1])[:-1][::-1], [1.0]])
    excl = prefix * suffix
    cum = np.concatenate([[0.0], np.cumsum(n * d * excl / y**2)])
    has_row, idx = _own_row_mask(row_of, k)
    own = np.where(has_row, n * excl[idx] / y[idx], 0.0)
    return -(own - cum[np.minimum(rows_le, k)])


def if_phi_rmst(times, at_risk, d_all, rows_le, row_of, tau):
    """Per-subject influence contributions for the restricted mean."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    if k == 0:
        return np.zeros(n)
    t = times[:k]
    d = d_all[:k]
    y = at_risk[:k]
    factors = 1.0 - d / y
    surv = np.cumprod(factors)
    surv_before = np.concatenate([[1.0], surv[:-1]])
    widths = np.diff(np.concatenate([t, [tau]]))
    # remaining area of the step curve from each row's time to tau
    rem = np.cumsum((surv * widths)[::-1])[::-1]
    safe = np.where(factors > 0.0, factors, 1.0)
    # ratio rem/factor is the area with row j's drop excluded; at a terminal
    # wipe-out row the exclusion leaves the pre-row level until tau
    area_excl = np.where(factors > 0.0, rem / safe, surv_before * (tau - t))
    cum = np.concatenate([[0.0], np.cumsum(n * d * area_excl / y**2)])
    has_row, idx = _own_row_mask(row_of, k)
    own = np.where(has_row, n * area_excl[idx] / y[idx], 0.0)
    return -(own - cum[np.minimum(rows_le, k)])


def if_phi_cif(times, at_risk, d_all, d_cause, rows_le, row_of, is_cause, tau):
    """Per-subject influence contributions for one cumulative incidence."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    if k == 0:
        return np.zeros(n)
    d = d_all[:k]
    dj = d_cause[:k]
    y = at_risk[:k]
    surv_before = np.concatenate([[1.0], np.cumprod(1.0 - d / y)[:-1]])
    cif = np.cumsum(surv_before * dj / y)
    theta = cif[-1]
    coef_cause = n * surv_before / y
    left = y - d
    # a row can only empty the at-risk set if it is last, and then it never
    # feeds the all-cause term of any later row
    coef_all = np.where(left > 0.0, n * (theta - cif) / np.where(left > 0.0, left, 1.0), 0.0)
    cum = np.concatenate(
        [[0.0], np.cumsum(coef_cause * dj / y - coef_all * d / y)]
    )
    has_row, idx = _own_row_mask(row_of, k)
    own_cause = np.where(has_row & (is_cause != 0), coef_cause[idx], 0.0)
    own_all = np.where(has_row, coef_all[idx], 0.0)
    return own_cause - own_all - cum[np.minimum(rows_le, k)]


def loo_survival(times, at_risk, d_all, rows_le, row_of, tau):
    """Leave-one-out Kaplan-Meier estimates, one per subject."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    out = np.ones(n)
    if k == 0:
        return out
    d = d_all[:k]
    y = at_risk[:k]
    ar = np.arange(k)
    for i in range(n):
        dp = d.copy()
        r = row_of[i]
        if 0 <= r < k:
            dp[r] -= 1.0
        yp = y - (ar < rows_le[i])
        factors = np.where(dp > 0.0, 1.0 - dp / np.where(yp > 0.0, yp, 1.0), 1.0)
        out[i] = factors.prod()
    return out


def loo_rmst(times, at_risk, d_all, rows_le, row_of, tau):
    """Leave-one-out restricted-mean estimates, one per subject."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    out = np.full(n, float(tau))
    if k == 0:
        return out
    t = times[:k]
    d = d_all[:k]
    y = at_risk[:k]
    widths = np.diff(np.concatenate([t, [tau]]))
    ar = np.arange(k)
    for i in range(n):
        dp = d.copy()
        r = row_of[i]
        if 0 <= r < k:
            dp[r] -= 1.0
        yp = y - (ar < rows_le[i])
        factors = np.where(dp > 0.0, 1.0 - dp / np.where(yp > 0.0, yp, 1.0), 1.0)
        out[i] = t[0] + np.sum(np.cumprod(factors) * widths)
    return out


def loo_cif(times, at_risk, d_all, d_cause, rows_le, row_of, is_cause, tau):
    """Leave-one-out Aalen-Johansen estimates, one per subject."""
    n = rows_le.shape[0]
    k = _rows_within(times, tau)
    out = np.zeros(n)
    if k == 0:
        return out
    d = d_all[:k]
    dj = d_cause[:k]
    y = at_risk[:k]
    ar = np.arange(k)
    for i in range(n):
        dp = d.copy()
        djp = dj.copy()
        r = row_of[i]
        if 0 <= r < k:
            dp[r] -= 1.0
            if is_cause[i]:
                djp[r] -= 1.0
        yp = y - (ar < rows_le[i])
        ysafe = np.where(yp > 0.0, yp, 1.0)
        factors = np.where(dp > 0.0, 1.0 - dp / ysafe, 1.0)
        surv_before = np.concatenate([[1.0], np.cumprod(factors)[:-1]])
        out[i] = np.sum(np.where(djp > 0.0, surv_before * djp / ysafe, 0.0))
    return out

# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled survival / pseudo-value kernels.

Drop-in replacement for :mod:`survmediate._kernels_py`; see that module's
docstring for the event-row representation and the formulas. The two
implementations must agree to floating-point roundoff.
"""

from libc.stdint cimport int64_t, uint8_t

import numpy as np

BACKEND = "compiled"


cdef Py_ssize_t _rows_within(const double[::1] times, double tau) noexcept:
    # first index with times[index] > tau (searchsorted side="right")
    cdef Py_ssize_t lo = 0, hi = times.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if times[mid] <= tau:
            lo = mid + 1
        else:
            hi = mid
    return lo


def km_at(const double[::1] times, const double[::1] at_risk,
          const double[::1] d_all, double tau):
    """Kaplan-Meier survival probability at ``tau`` (all-cause events)."""
    cdef Py_ssize_t k = _rows_within(times, tau), j
    cdef double s = 1.0
    for j in range(k):
        s *= 1.0 - d_all[j] / at_risk[j]
    return s


def rmst_at(const double[::1] times, const double[::1] at_risk,
            const double[::1] d_all, double tau):
    """Area under the Kaplan-Meier step curve on [0, tau]."""
    cdef Py_ssize_t k = _rows_within(times, tau), j
    cdef double area = 0.0, s = 1.0, prev = 0.0
    for j in range(k):
        area += s * (times[j] - prev)
        s *= 1.0 - d_all[j] / at_risk[j]
        prev = times[j]
    return area + s * (tau - prev)


def cif_at(const double[::1] times, const double[::1] at_risk,
           const double[::1] d_all, const double[::1] d_cause, double tau):
    """Aalen-Johansen cumulative incidence for one cause at ``tau``."""
    cdef Py_ssize_t k = _rows_within(times, tau), j
    cdef double total = 0.0, s_before = 1.0
    for j in range(k):
        total += s_before * d_cause[j] / at_risk[j]
        s_before *= 1.0 - d_all[j] / at_risk[j]
    return total


def if_phi_survival(const double[::1] times, const double[::1] at_risk,
                    const double[::1] d_all, const int64_t[::1] rows_le,
                    const int64_t[::1] row_of, double tau):
    """Per-subject influence contributions for the survival probability."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j, m
    out = np.zeros(n)
    cdef double[::1] phi = out
    if k == 0:
        return out
    excl_arr = np.empty(k)
    cum_arr = np.empty(k + 1)
    cdef double[::1] excl = excl_arr, cum = cum_arr
    cdef double acc = 1.0, nn = <double> n, own
    cdef int64_t r
    for j in range(k):
        excl[j] = acc
        acc *= 1.0 - d_all[j] / at_risk[j]
    acc = 1.0
    for j in range(k - 1, -1, -1):
        excl[j] *= acc
        acc *= 1.0 - d_all[j] / at_risk[j]
    cum[0] = 0.0
    for j in range(k):
        cum[j + 1] = cum[j] + nn * d_all[j] * excl[j] / (at_risk[j] * at_risk[j])
    for i in range(n):
        m = rows_le[i]
        if m > k:
            m = k
        own = 0.0
        r = row_of[i]
        if 0 <= r < k:
            own = nn * excl[r] / at_risk[r]
        phi[i] = -(own - cum[m])
    return out


def if_phi_rmst(const double[::1] times, const double[::1] at_risk,
                const double[::1] d_all, const int64_t[::1] rows_le,
                const int64_t[::1] row_of, double tau):
    """Per-subject influence contributions for the restricted mean."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j, m
    out = np.zeros(n)
    cdef double[::1] phi = out
    if k == 0:
        return out
    surv_arr = np.empty(k)
    area_excl_arr = np.empty(k)
    cum_arr = np.empty(k + 1)
    cdef double[::1] surv = surv_arr, area_excl = area_excl_arr, cum = cum_arr
    cdef double s = 1.0, rem, fac, s_before, width, nn = <double> n, own
    cdef int64_t r
    for j in range(k):
        s *= 1.0 - d_all[j] / at_risk[j]
        surv[j] = s
    rem = 0.0
    for j in range(k - 1, -1, -1):
        width = (times[j + 1] if j + 1 < k else tau) - times[j]
        rem += surv[j] * width
        fac = 1.0 - d_all[j] / at_risk[j]
        s_before = surv[j - 1] if j > 0 else 1.0
        if fac > 0.0:
            area_excl[j] = rem / fac
        else:
            area_excl[j] = s_before * (tau - times[j])
    cum[0] = 0.0
    for j in range(k):
        cum[j + 1] = cum[j] + nn * d_all[j] * area_excl[j] / (at_risk[j] * at_risk[j])
    for i in range(n):
        m = rows_le[i]
        if m > k:
            m = k
        own = 0.0
        r = row_of[i]
        if 0 <= r < k:
            own = nn * area_excl[r] / at_risk[r]
        phi[i] = -(own - cum[m])
    return out


def if_phi_cif(const double[::1] times, const double[::1] at_risk,
               const double[::1] d_all, const double[::1] d_cause,
               const int64_t[::1] rows_le, const int64_t[::1] row_of,
               const uint8_t[::1] is_cause, double tau):
    """Per-subject influence contributions for one cumulative incidence."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j, m
    out = np.zeros(n)
    cdef double[::1] phi = out
    if k == 0:
        return out
    coef_cause_arr = np.empty(k)
    coef_all_arr = np.empty(k)
    cif_arr = np.empty(k)
    cum_arr = np.empty(k + 1)
    cdef double[::1] coef_cause = coef_cause_arr, coef_all = coef_all_arr
    cdef double[::1] cif = cif_arr, cum = cum_arr
    cdef double s_before = 1.0, total = 0.0, left, nn = <double> n, own
    cdef int64_t r
    for j in range(k):
        total += s_before * d_cause[j] / at_risk[j]
        cif[j] = total
        coef_cause[j] = nn * s_before / at_risk[j]
        s_before *= 1.0 - d_all[j] / at_risk[j]
    cum[0] = 0.0
    for j in range(k):
        left = at_risk[j] - d_all[j]
        coef_all[j] = nn * (total - cif[j]) / left if left > 0.0 else 0.0
        cum[j + 1] = cum[j] + (coef_cause[j] * d_cause[j] - coef_all[j] * d_all[j]) / at_risk[j]
    for i in range(n):
        m = rows_le[i]
        if m > k:
            m = k
        own = 0.0
        r = row_of[i]
        if 0 <= r < k:
            if is_cause[i]:
                own = coef_cause[r]
            own -= coef_all[r]
        phi[i] = own - cum[m]
    return out


def loo_survival(const double[::1] times, const double[::1] at_risk,
                 const double[::1] d_all, const int64_t[::1] rows_le,
                 const int64_t[::1] row_of, double tau):
    """Leave-one-out Kaplan-Meier estimates, one per subject."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j
    out = np.ones(n)
    cdef double[::1] loo = out
    cdef double s, dd, yy
    cdef int64_t ri, e
    for i in range(n):
        ri = rows_le[i]
        e = row_of[i]
        s = 1.0
        for j in range(k):
            dd = d_all[j]
            if j == e:
                dd -= 1.0
            if dd > 0.0:
                yy = at_risk[j]
                if j < ri:
                    yy -= 1.0
                s *= 1.0 - dd / yy
        loo[i] = s
    return out


def loo_rmst(const double[::1] times, const double[::1] at_risk,
             const double[::1] d_all, const int64_t[::1] rows_le,
             const int64_t[::1] row_of, double tau):
    """Leave-one-out restricted-mean estimates, one per subject."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j
    out = np.empty(n)
    cdef double[::1] loo = out
    cdef double s, dd, yy, area, prev
    cdef int64_t ri, e
    for i in range(n):
        ri = rows_le[i]
        e = row_of[i]
        s = 1.0
        area = 0.0
        prev = 0.0
        for j in range(k):
            area += s * (times[j] - prev)
            prev = times[j]
            dd = d_all[j]
            if j == e:
                dd -= 1.0
            if dd > 0.0:
                yy = at_risk[j]
                if j < ri:
                    yy -= 1.0
                s *= 1.0 - dd / yy
        loo[i] = area + s * (tau - prev)
    return out


def loo_cif(const double[::1] times, const double[::1] at_risk,
            const double[::1] d_all, const double[::1] d_cause,
            const int64_t[::1] rows_le, const int64_t[::1] row_of,
            const uint8_t[::1] is_cause, double tau):
    """Leave-one-out Aalen-Johansen estimates, one per subject."""
    cdef Py_ssize_t k = _rows_within(times, tau)
    cdef Py_ssize_t n = rows_le.shape[0], i, j
    out = np.zeros(n)
    cdef double[::1] loo = out
    cdef double s_before, total, dd, ddj, yy
    cdef int64_t ri, e
    for i in range(n):
        ri = rows_le[i]
        e = row_of[i]
        s_before = 1.0
        total = 0.0
        for j in range(k):
            dd = d_all[j]
            ddj = d_cause[j]
            if j == e:
                dd -= 1.0
                if is_cause[i]:
                    ddj -= 1.0
            yy = at_risk[j]
            if j < ri:
                yy -= 1.0
            if yy > 0.0:
                if ddj > 0.0:
                    total += s_before * ddj / yy
                if dd > 0.0:
                    s_before *= 1.0 - dd / yy
        loo[i] = total
    return out

"""Mediator and outcome regressions, and the effect decomposition.

The mediation estimates come from two least-squares fits:

* mediator model: mediator ~ intercept + arm (+ treatment-mediator
  confounders, unnecessary under randomization);
* outcome model: pseudo-value ~ intercept + arm + mediator (+ mediator-
  outcome confounders, which randomization does not handle and which should
  be adjusted for in almost all cases).

Writing ``alpha_arm`` for the arm coefficient of the mediator model and
``beta_arm`` / ``beta_med`` for the arm and mediator coefficients of the
outcome model, the effects on the estimand scale are

    natural direct effect   = beta_arm
    natural indirect effect = alpha_arm * beta_med
    total effect            = beta_arm + alpha_arm * beta_med

which is additive by construction. The decomposition assumes linearity with
no treatment-mediator interaction; requesting an interaction term is
rejected.

Coefficient covariances default to the classical sigma^2 (X'X)^-1; an HC1
sandwich estimate is always computed alongside because pseudo-value
responses are heteroscedastic, and either can be selected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .pseudo import EstimandKind, PseudoValueSet
from .survival import SurvivalSample

__all__ = [
    "LinearFit",
    "MediationEffects",
    "RankDeficientError",
    "NoConfoundersWarning",
    "ols_fit",
    "fit_mediator_model",
    "fit_outcome_model",
    "decompose_effects",
]


class RankDeficientError(ValueError):
    """Raised when the design matrix does not have full column rank."""


_EPS = float(np.finfo(np.float64).eps)


class NoConfoundersWarning(UserWarning):
    """Outcome model fitted without mediator-outcome confounders."""


@dataclass(frozen=True, eq=False)
class LinearFit:
    """Least-squares fit with both classical and HC1 coefficient covariances.

    ``covariance`` is the selected one (per ``covariance_kind``); the other
    is retained so the choice stays auditable downstream.
    """

    coefficients: np.ndarray
    covariance_classical: np.ndarray
    covariance_hc1: np.ndarray
    residual_variance: float
    n_obs: int
    regressor_names: tuple[str, ...]
    covariance_kind: str = "classical"

    @property
    def covariance(self) -> np.ndarray:
        if self.covariance_kind == "hc1":
            return self.covariance_hc1
        return self.covariance_classical

    def _index(self, name: str) -> int:
        try:
            return self.regressor_names.index(name)
        except ValueError:
            raise KeyError(f"no regressor named {name!r} in {self.regressor_names}")

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self._index(name)])

    def variance(self, name: str) -> float:
        i = self._index(name)
        return float(self.covariance[i, i])

    def covariance_between(self, a: str, b: str) -> float:
        return float(self.covariance[self._index(a), self._index(b)])

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


@dataclass(frozen=True)
class MediationEffects:
    """Natural direct, natural indirect and total effect on one estimand
    scale. ``prop_mediated`` is nie/te, or nan when the total effect is
    exactly zero (undefined, not an error)."""

    nde: float
    nie: float
    te: float
    prop_mediated: float
    scale: EstimandKind | None = None


def ols_fit(
    design,
    response,
    names: Sequence[str] | None = None,
    robust: bool = False,
) -> LinearFit:
    """Least squares via pivoted QR, with rank checking.

    ``design`` must already contain any intercept column. The classical
    covariance is residual_variance * (X'X)^-1; ``robust=True`` selects the
    HC1 sandwich instead (both are stored on the fit).
    """
    x = np.asarray(design, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("design must be a 2-D matrix")
    n, p = x.shape
    if y.shape != (n,):
        raise ValueError("response must align with the design rows")
    if names is None:
        names = tuple(f"x{i}" for i in range(p))
    else:
        names = tuple(names)
        if len(names) != p:
            raise ValueError("one name per design column required")
    if n <= p:
        raise ValueError(f"need more observations than regressors (n={n}, p={p})")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise ValueError("design and response must be finite")

    q, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(n, p) * _EPS if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < p:
        dropped = [names[j] for j in piv[rank:]]
        raise RankDeficientError(
            f"design is rank deficient (rank {rank} < {p}); "
            f"pivoting flags columns {dropped}"
        )

    r_inv = scipy.linalg.solve_triangular(r, np.eye(p), check_finite=False)
    beta = np.empty(p)
    beta[piv] = r_inv @ (q.T @ y)
    residuals = y - x @ beta
    dof = n - p
    rss = float(residuals @ residuals)
    sigma2 = rss / dof

    xtx_inv_pivoted = r_inv @ r_inv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[piv[:, None], piv[None, :]] = xtx_inv_pivoted
    classical = sigma2 * xtx_inv

    meat = (x * residuals[:, None] ** 2).T @ x
    hc1 = xtx_inv @ meat @ xtx_inv * (n / dof)

    return LinearFit(
        coefficients=beta,
        covariance_classical=classical,
        covariance_hc1=hc1,
        residual_variance=sigma2,
        n_obs=n,
        regressor_names=names,
        covariance_kind="hc1" if robust else "classical",
    )


def _confounder_block(sample: SurvivalSample, confounders) -> tuple[np.ndarray, list[str]]:
    if confounders is None:
        return np.empty((sample.n, 0)), []
    block = np.asarray(confounders, dtype=np.float64)
    if block.ndim == 1:
        block = block[:, None]
    if block.shape[0] != sample.n:
        raise ValueError("confounders must align with the sample")
    names = [f"c{i}" for i in range(block.shape[1])]
    return block, names


def fit_mediator_model(
    sample: SurvivalSample,
    confounders=None,
    robust: bool = False,
) -> LinearFit:
    """Regress the mediator on the treatment arm.

    Under randomized treatment no confounders are needed here; a block of
    treatment-mediator confounders can still be supplied.
    """
    block, cnames = _confounder_block(sample, confounders)
    design = np.column_stack([np.ones(sample.n), sample.arm.astype(np.float64), block])
    return ols_fit(design, sample.mediator, ["intercept", "arm", *cnames], robust=robust)


def fit_outcome_model(
    pseudo: PseudoValueSet,
    sample: SurvivalSample,
    confounders=None,
    robust: bool = False,
    interaction: bool = False,
) -> LinearFit:
    """Regress pseudo-values on arm, mediator and confounders.

    Mediator-outcome confounders are not handled by randomization and should
    be adjusted for in almost all cases, so omitting them raises
    :class:`NoConfoundersWarning` (the fit still proceeds).
    """
    if interaction:
        raise ValueError(
            "treatment-mediator interaction terms are not supported; the "
            "decomposition assumes linearity with no interaction"
        )
    if pseudo.n != sample.n:
        raise ValueError("pseudo-values must align with the sample")
    block, cnames = _confounder_block(sample, confounders)
    if block.shape[1] == 0:
        warnings.warn(
            "no mediator-outcome confounders supplied; effects are only "
            "identified if none exist",
            NoConfoundersWarning,
            stacklevel=2,
        )
    design = np.column_stack(
        [np.ones(sample.n), sample.arm.astype(np.float64), sample.mediator, block]
    )
    return ols_fit(
        design, pseudo.values, ["intercept", "arm", "mediator", *cnames], robust=robust
    )


def decompose_effects(
    mediator_fit: LinearFit,
    outcome_fit: LinearFit,
    scale: EstimandKind | None = None,
) -> MediationEffects:
    """Combine the two fits into natural direct / indirect / total effects."""
    alpha_arm = mediator_fit.coefficient("arm")
    nde = outcome_fit.coefficient("arm")
    nie = alpha_arm * outcome_fit.coefficient("mediator")
    te = nde + nie
    prop = nie / te if te != 0.0 else math.nan
    return MediationEffects(nde=nde, nie=nie, te=te, prop_mediated=prop, scale=scale)

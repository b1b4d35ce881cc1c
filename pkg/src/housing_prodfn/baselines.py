"""Comparison estimators that ignore land productivity.

* ``ols``: the traditional factor-share estimator.  Under constant returns,
  competitive pricing and zero profit, each input's output elasticity equals
  its share of housing value, so the elasticities are least-squares means of
  the two cost shares.
* ``egs``: per-unit-land duality.  Land cost per unit land is fitted as a
  cubic in housing value per unit land; the fitted capital per unit land over
  value per unit land is the capital elasticity under constant returns.
* ``cdg``: the capital revenue share ``K / (K + R)`` fitted on a complete
  quadratic in ``(k, l)``; the fitted share is the capital elasticity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model_core import Panel
from .proposed import EstimateReport, EstimationError, design, monomials


@dataclass(frozen=True)
class PerLandVars:
    v: np.ndarray
    pl: np.ndarray
    m: np.ndarray

    @classmethod
    def from_panel(cls, panel: Panel) -> "PerLandVars":
        return cls(v=panel.value / panel.L, pl=panel.R / panel.L, m=panel.K / panel.L)


def _lstsq(X: np.ndarray, y: np.ndarray, stage: str, strict: bool = True) -> np.ndarray:
    """Least squares; fitted values stay unique under collinearity, coefficients do not."""
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if strict and rank < X.shape[1]:
        raise EstimationError(f"design matrix is rank deficient ({rank} < {X.shape[1]})", stage)
    return coef


def ols_estimate(panel: Panel) -> EstimateReport:
    n = panel.n_obs
    ones = np.ones((n, 1))
    shares = np.stack([(panel.K / panel.value).ravel(), (panel.R / panel.value).ravel()], axis=1)
    coef = _lstsq(ones, shares, "ols")[0]
    return EstimateReport(
        method="ols",
        eps_k_mean=float(coef[0]),
        eps_l_mean=float(coef[1]),
        diagnostics={"form": "factor-share", "n": n},
    )


def loglinear_ols(panel: Panel) -> EstimateReport:
    """Regress log housing value on ``(1, k, l)``.

    With capital chosen from the first-order condition, log value is an exact
    linear function of ``k`` plus the ex post shock, so this regression puts
    all weight on capital; it is kept for diagnostics only.
    """
    X = np.stack([np.ones(panel.n_obs), panel.k.ravel(), panel.l.ravel()], axis=1)
    coef = _lstsq(X, np.log(panel.value).ravel(), "ols-loglinear")
    return EstimateReport(
        method="ols-loglinear",
        eps_k_mean=float(coef[1]),
        eps_l_mean=float(coef[2]),
        diagnostics={"intercept": float(coef[0])},
    )


def egs_estimate(panel: Panel, degree: int = 3) -> EstimateReport:
    pv = PerLandVars.from_panel(panel)
    v = pv.v.ravel()
    # scale v before building powers; the fitted values do not depend on it
    vs = v / v.mean()
    X = np.vander(vs, degree + 1, increasing=True)
    coef = _lstsq(X, pv.pl.ravel(), "egs", strict=False)
    r_hat = X @ coef
    eps_k = ((v - r_hat) / v).reshape(panel.shape)
    eps_l = 1.0 - eps_k
    return EstimateReport(
        method="egs",
        eps_k_mean=float(eps_k.mean()),
        eps_l_mean=float(eps_l.mean()),
        eps_k=eps_k,
        eps_l=eps_l,
        diagnostics={"degree": degree, "rent_fit_sse": float(np.sum((pv.pl.ravel() - r_hat) ** 2))},
    )


def cdg_estimate(panel: Panel, degree: int = 2) -> EstimateReport:
    share = (panel.K / (panel.K + panel.R)).ravel()
    k = panel.k.ravel()
    l = panel.l.ravel()
    X = design((k - k.mean()) / (k.std() or 1.0), (l - l.mean()) / (l.std() or 1.0), monomials(degree))
    coef = _lstsq(X, share, "cdg", strict=False)
    eps_k = (X @ coef).reshape(panel.shape)
    return EstimateReport(
        method="cdg",
        eps_k_mean=float(eps_k.mean()),
        eps_l_mean=None,
        eps_k=eps_k,
        diagnostics={"degree": degree},
    )

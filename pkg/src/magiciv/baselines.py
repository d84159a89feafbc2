"""Reference estimators: TSLS, a single-pair interaction ratio, and the
fixed-dimension efficient two-step GMM with its variance-bound estimate.

These exist for comparison with the main estimator. TSLS is inconsistent
whenever instruments have direct outcome effects; the interaction-based
estimators stay valid because demeaned products of mutually independent
instruments are orthogonal to any linear instrument effect. Two published
comparator methods built on instrument-selection rules (two-stage hard
thresholding, adaptive Lasso) are deliberately out of scope: they carry
their own tuning stacks and are available in their authors' packages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .data import Dataset
from .errors import ConfigError, NumericalError
from .interactions import InteractionPlan, demeaned_matrix
from .nuisance import estimate_means

__all__ = ["BaselineResult", "tsls", "ratio_pair", "efficient_fixed_r"]

_RIDGE_MULTIPLIERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


@dataclass(frozen=True)
class BaselineResult:
    method: str  # "tsls" | "ratio_pair" | "efficient_fixed_r"
    beta_hat: float
    se: float
    extra: dict = field(default_factory=dict)


def tsls(ds: Dataset) -> BaselineResult:
    """Two-stage least squares of y on d instrumented by all of z, with
    intercept and heteroskedasticity-robust (HC0) standard error."""
    n = ds.n
    z_full = np.column_stack([np.ones(n), ds.z])
    x = np.column_stack([np.ones(n), ds.d])
    first, _, rank, _ = linalg.lstsq(
        z_full,
        x,
        cond=np.finfo(float).eps * max(z_full.shape),
        lapack_driver="gelsy",
        check_finite=False,
    )
    if rank < z_full.shape[1]:
        raise NumericalError(
            f"first-stage design rank {rank} < {z_full.shape[1]}; instruments collinear"
        )
    x_hat = z_full @ first
    xtx = x_hat.T @ x_hat
    try:
        coef = np.linalg.solve(xtx, x_hat.T @ ds.y)
    except np.linalg.LinAlgError:
        raise NumericalError("projected design is singular (no exposure variation)") from None
    resid = ds.y - x @ coef
    meat = x_hat.T @ (x_hat * (resid * resid)[:, None])
    bread = np.linalg.solve(xtx, np.eye(2))
    vcov = bread @ meat @ bread
    return BaselineResult(
        method="tsls",
        beta_hat=float(coef[1]),
        se=math.sqrt(max(vcov[1, 1], 0.0)),
        extra={"intercept": float(coef[0])},
    )


def ratio_pair(ds: Dataset, j: int, k: int) -> BaselineResult:
    """Plug-in ratio estimator from a single demeaned pairwise interaction.

    beta_hat = mean(w*y) / mean(w*d) with w = (z_j - mu_j)(z_k - mu_k) at
    sample means; the standard error is the delta-method one treating the
    interaction weight as fixed.
    """
    if j == k:
        raise ConfigError("ratio_pair needs two distinct instrument indices")
    if not (0 <= j < ds.p and 0 <= k < ds.p):
        raise ConfigError(f"instrument indices out of range [0, {ds.p})")
    mu = estimate_means(ds)
    w = (ds.z[:, j] - mu[j]) * (ds.z[:, k] - mu[k])
    den = float(np.mean(w * ds.d))
    if den == 0.0:
        raise NumericalError(
            f"interaction ({j},{k}) carries no exposure signal (denominator 0.0)"
        )
    num = float(np.mean(w * ds.y))
    beta = num / den
    m = w * (ds.y - beta * ds.d)
    se = math.sqrt(float(np.mean(m * m)) / ds.n) / abs(den)
    return BaselineResult(
        method="ratio_pair",
        beta_hat=beta,
        se=se,
        extra={"pair": [int(min(j, k)), int(max(j, k))], "denominator": den},
    )


def _solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """SPD solve with the same trace-scaled ridge ladder the CUE uses."""
    scale = max(float(np.trace(mat)) / mat.shape[0], np.finfo(float).tiny)
    for mult in _RIDGE_MULTIPLIERS:
        try:
            factor = linalg.cho_factor(
                mat + mult * scale * np.eye(mat.shape[0]) if mult else mat, lower=True
            )
        except linalg.LinAlgError:
            continue
        return linalg.cho_solve(factor, rhs)
    raise NumericalError("moment covariance factorization failed even after ridge escalation")


def efficient_fixed_r(
    ds: Dataset, plan: InteractionPlan, beta_init: Optional[float] = None
) -> BaselineResult:
    """Two-step GMM on the interaction moments with optimally weighted score.

    A first-step beta (TSLS by default) is used only to form the weighting:
    pi_hat is the least-squares fit of y - d*beta_init on (intercept + z),
    the moment covariance is taken at beta_init, and the estimate solves the
    scalar moment weighted by Omega^{-1} M. The first step affects weighting
    efficiency only, not consistency, because the interaction moments hold
    for any instrument direct effects. ``extra`` carries the fixed-dimension
    variance bound estimate (M' Omega^{-1} M)^{-1} / n.
    """
    if beta_init is None:
        beta_init = tsls(ds).beta_hat
    n = ds.n
    z_full = np.column_stack([np.ones(n), ds.z])
    pi_coef, _, rank, _ = linalg.lstsq(
        z_full,
        ds.y - ds.d * beta_init,
        cond=np.finfo(float).eps * max(z_full.shape),
        lapack_driver="gelsy",
        check_finite=False,
    )
    if rank < z_full.shape[1]:
        raise NumericalError("direct-effect regression design is rank deficient")
    fitted_lin = z_full @ pi_coef
    w = demeaned_matrix(ds.z, estimate_means(ds), plan)
    resid0 = ds.y - ds.d * beta_init - fitted_lin
    m0 = w * resid0[:, None]
    om = m0.T @ m0 / n
    om = 0.5 * (om + om.T)
    m_vec = -(w.T @ ds.d) / n
    if float(np.max(np.abs(m_vec))) == 0.0:
        raise NumericalError("relevance vector is identically zero")
    if not om.any():
        # every residual moment vanished at beta_init (noiseless exact fit):
        # the weighting is immaterial and the bound degenerates to zero
        theta_opt = m_vec.copy()
        bound_override = 0.0
    else:
        theta_opt = _solve_spd(om, m_vec)
        bound_override = None
    # moment is affine in beta: E_n[w (y - fitted_lin)] - beta E_n[w d]
    a_vec = w.T @ (ds.y - fitted_lin) / n
    b_vec = w.T @ ds.d / n
    denom = float(theta_opt @ b_vec)
    if denom == 0.0:
        raise NumericalError("weighted moment has zero slope in beta")
    beta_hat = float(theta_opt @ a_vec) / denom
    bound = bound_override if bound_override is not None else 1.0 / float(m_vec @ theta_opt) / n
    return BaselineResult(
        method="efficient_fixed_r",
        beta_hat=beta_hat,
        se=math.sqrt(max(bound, 0.0)),
        extra={"bound": bound, "beta_first_step": float(beta_init)},
    )

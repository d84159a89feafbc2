"""Interaction-strength diagnostic.

How much exposure variation do the interactions carry once the linear
instrument effects are removed? The statistic regresses the partialled-out
exposure on the demeaned interactions and reports the HC0-robust joint Wald
statistic for the interaction coefficients divided by their count. It is a
descriptive measure of identification strength, not a formal pre-test, so
no small-sample or degrees-of-freedom correction is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .data import Dataset
from .errors import NumericalError
from .interactions import InteractionPlan, demeaned_matrix
from .nuisance import estimate_means

__all__ = ["FStatReport", "f_stat"]


@dataclass(frozen=True)
class FStatReport:
    f_value: float
    num_restrictions: int
    n_effective: int


def f_stat(ds: Dataset, plan: InteractionPlan) -> FStatReport:
    """Robust Wald / r for the interaction coefficients explaining exposure.

    Steps: (1) residualize d on (intercept + z); (2) regress that residual
    on (intercept, demeaned interactions at sample means); (3) HC0 sandwich
    Wald statistic for the r interaction coefficients, divided by r.
    """
    n, r = ds.n, plan.r
    if n <= r + 1:
        raise NumericalError(f"need n > r + 1 observations (n={n}, r={r})")
    z_full = np.column_stack([np.ones(n), ds.z])
    lin_coef, _, rank, _ = linalg.lstsq(
        z_full,
        ds.d,
        cond=np.finfo(float).eps * max(z_full.shape),
        lapack_driver="gelsy",
        check_finite=False,
    )
    if rank < z_full.shape[1]:
        raise NumericalError(
            f"exposure partialling design rank {rank} < {z_full.shape[1]}"
        )
    d_bar = ds.d - z_full @ lin_coef
    scale = max(float(np.max(np.abs(ds.d))), 1.0)
    if float(np.max(np.abs(d_bar))) <= 1e-12 * scale:
        # exposure exactly linear in z: nothing left for the interactions
        return FStatReport(f_value=0.0, num_restrictions=r, n_effective=n)

    design = np.column_stack(
        [np.ones(n), demeaned_matrix(ds.z, estimate_means(ds), plan)]
    )
    coef, _, rank, _ = linalg.lstsq(
        design,
        d_bar,
        cond=np.finfo(float).eps * max(design.shape),
        lapack_driver="gelsy",
        check_finite=False,
    )
    if rank < design.shape[1]:
        raise NumericalError(
            f"interaction regression design rank {rank} < {design.shape[1]}"
        )
    resid = d_bar - design @ coef
    xtx_inv = np.linalg.solve(design.T @ design, np.eye(design.shape[1]))
    meat = design.T @ (design * (resid * resid)[:, None])
    vcov = xtx_inv @ meat @ xtx_inv
    gamma = coef[1:]
    try:
        wald = float(gamma @ np.linalg.solve(vcov[1:, 1:], gamma))
    except np.linalg.LinAlgError:
        raise NumericalError("robust covariance of interaction coefficients is singular") from None
    return FStatReport(f_value=wald / r, num_restrictions=r, n_effective=n)

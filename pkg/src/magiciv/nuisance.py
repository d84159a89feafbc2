"""First-stage nuisance estimation: instrument means and per-order projections.

For each interaction order k the outcome and exposure are projected onto the
non-demeaned lower-order basis W_{k-1} = (1, mains, ..., order k-1 products)
by ordinary least squares, and the per-order residuals feed the moment
construction. Each order is projected independently; the q-1 regressions are
not incrementally updated, which keeps them individually auditable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import linalg

from .data import Dataset
from .errors import NumericalError
from .interactions import InteractionPlan, basis_matrix

__all__ = [
    "NuisanceEstimate",
    "ResidualPair",
    "estimate_means",
    "project",
    "residuals",
    "fit_nuisance",
]


@dataclass(frozen=True, eq=False)
class NuisanceEstimate:
    """Sample means plus per-order projection coefficients.

    ``theta[k-1]`` and ``xi[k-1]`` hold the outcome and exposure coefficients
    on the order-(k-1) basis, for k = 2..q.
    """

    mu_hat: np.ndarray
    theta: Mapping[int, np.ndarray]
    xi: Mapping[int, np.ndarray]


@dataclass(frozen=True, eq=False)
class ResidualPair:
    r_y: np.ndarray
    r_d: np.ndarray
    order: int


def estimate_means(ds: Dataset) -> np.ndarray:
    """Columnwise sample means of the instrument matrix."""
    return ds.z.mean(axis=0)


def _solve_min_norm(design: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares via complete orthogonal factorization.

    LAPACK gelsy pivots columns and returns the minimum-norm solution on
    rank deficiency; the rank cutoff is machine-epsilon scaled.
    """
    n, m = design.shape
    if m > n:
        raise NumericalError(
            f"design has {m} columns but only {n} rows; need n >= {m}"
        )
    coef, _, rank, _ = linalg.lstsq(
        design,
        rhs,
        cond=np.finfo(float).eps * max(design.shape),
        lapack_driver="gelsy",
        check_finite=False,
    )
    if rank == 0:
        raise NumericalError("numerically rank-zero design")
    return coef


def project(ds: Dataset, plan: InteractionPlan, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients of y and d on the order-(k-1) basis."""
    design = basis_matrix(ds.z, plan, k)
    coef = _solve_min_norm(design, np.column_stack([ds.y, ds.d]))
    return coef[:, 0], coef[:, 1]


def residuals(
    ds: Dataset, nuis: NuisanceEstimate, plan: InteractionPlan, k: int
) -> ResidualPair:
    """Per-order residuals r_y = y - W_{k-1} theta, r_d = d - W_{k-1} xi."""
    key = k - 1
    if key not in nuis.theta or key not in nuis.xi:
        raise NumericalError(f"nuisance estimate has no coefficients for order k={k}")
    design = basis_matrix(ds.z, plan, k)
    return ResidualPair(
        r_y=ds.y - design @ nuis.theta[key],
        r_d=ds.d - design @ nuis.xi[key],
        order=k,
    )


def fit_nuisance(ds: Dataset, plan: InteractionPlan) -> NuisanceEstimate:
    """Estimate means and all per-order projections for orders 2..q."""
    theta: dict[int, np.ndarray] = {}
    xi: dict[int, np.ndarray] = {}
    for k in range(2, plan.q + 1):
        theta[k - 1], xi[k - 1] = project(ds, plan, k)
    return NuisanceEstimate(mu_hat=estimate_means(ds), theta=theta, xi=xi)

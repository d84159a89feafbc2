import numpy as np
import pytest

from magiciv import (
    Dataset,
    NumericalError,
    build_plan,
    estimate_means,
    fit_nuisance,
    project,
    residuals,
)
from magiciv.interactions import basis_matrix
from magiciv.nuisance import NuisanceEstimate

from conftest import make_binary_dataset


def test_estimate_means_half_ones():
    z = np.array([[1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    ds = Dataset(y=np.arange(4.0), d=np.arange(4.0), z=z)
    assert estimate_means(ds).tolist() == [0.5, 0.5]


def test_project_exact_linear_fit():
    ds = make_binary_dataset(n=20, p=2, seed=3)
    y = 2.0 + 3.0 * ds.z[:, 0]
    ds = Dataset(y=y, d=ds.d, z=ds.z)
    plan = build_plan(2, 2)
    theta, _ = project(ds, plan, 2)
    assert np.allclose(theta, [2.0, 3.0, 0.0], atol=1e-12)
    nuis = fit_nuisance(ds, plan)
    pair = residuals(ds, nuis, plan, 2)
    assert np.allclose(pair.r_y, 0.0, atol=1e-12)


def test_project_constant_outcome():
    ds = make_binary_dataset(n=16, p=2, seed=4)
    ds = Dataset(y=np.full(16, 7.25), d=ds.d, z=ds.z)
    theta, _ = project(ds, build_plan(2, 2), 2)
    assert np.allclose(theta, [7.25, 0.0, 0.0], atol=1e-12)


def test_project_matches_normal_equations_oracle():
    # product outcome is outside the span of (1, z1, z2): residual nonzero
    rng = np.random.default_rng(7)
    z = (rng.random((20, 2)) < 0.5).astype(float)
    z[0] = [0, 1]
    z[1] = [1, 0]
    y = z[:, 0] * z[:, 1]
    ds = Dataset(y=y, d=y.copy(), z=z)
    plan = build_plan(2, 2)
    design = basis_matrix(ds.z, plan, 2)
    oracle_coef = np.linalg.solve(design.T @ design, design.T @ y)
    oracle_resid = y - design @ oracle_coef

    theta, _ = project(ds, plan, 2)
    nuis = fit_nuisance(ds, plan)
    pair = residuals(ds, nuis, plan, 2)
    assert np.linalg.norm(pair.r_y) > 0.1
    assert np.allclose(theta, oracle_coef, atol=1e-10)
    assert np.allclose(pair.r_y, oracle_resid, atol=1e-10)


def test_residuals_zero_coefficients_return_y():
    ds = make_binary_dataset(n=18, p=2, seed=5)
    plan = build_plan(2, 2)
    nuis = NuisanceEstimate(
        mu_hat=estimate_means(ds), theta={1: np.zeros(3)}, xi={1: np.zeros(3)}
    )
    pair = residuals(ds, nuis, plan, 2)
    assert np.array_equal(pair.r_y, ds.y)
    assert np.array_equal(pair.r_d, ds.d)


def test_residuals_missing_order_errors():
    ds = make_binary_dataset(n=18, p=3, seed=6)
    plan = build_plan(3, 3)
    nuis = NuisanceEstimate(mu_hat=estimate_means(ds), theta={}, xi={})
    with pytest.raises(NumericalError, match="no coefficients"):
        residuals(ds, nuis, plan, 2)


def test_in_sample_orthogonality_bound():
    ds = make_binary_dataset(n=200, p=4, seed=8)
    plan = build_plan(4, 3)
    nuis = fit_nuisance(ds, plan)
    for k in (2, 3):
        design = basis_matrix(ds.z, plan, k)
        pair = residuals(ds, nuis, plan, k)
        bound = 1e-8 * ds.n * np.max(np.abs(ds.y)) * np.max(np.abs(design))
        assert np.max(np.abs(design.T @ pair.r_y)) <= bound
        bound_d = 1e-8 * ds.n * np.max(np.abs(ds.d)) * np.max(np.abs(design))
        assert np.max(np.abs(design.T @ pair.r_d)) <= bound_d


def test_outcome_shift_moves_only_intercept():
    ds = make_binary_dataset(n=60, p=3, seed=9)
    plan = build_plan(3, 2)
    theta_base, _ = project(ds, plan, 2)
    shifted = Dataset(y=ds.y + 5.0, d=ds.d, z=ds.z)
    theta_shift, _ = project(shifted, plan, 2)
    assert abs(theta_shift[0] - theta_base[0] - 5.0) < 1e-10
    assert np.allclose(theta_shift[1:], theta_base[1:], atol=1e-10)

    base_resid = residuals(ds, fit_nuisance(ds, plan), plan, 2).r_y
    shift_resid = residuals(shifted, fit_nuisance(shifted, plan), plan, 2).r_y
    scale = max(1.0, float(np.max(np.abs(base_resid))))
    assert np.max(np.abs(shift_resid - base_resid)) <= 1e-12 * scale * 10


def test_design_wider_than_n_reports_requirement():
    ds = make_binary_dataset(n=6, p=4, seed=10)
    plan = build_plan(4, 3)  # order-3 basis has 1 + 4 + 6 = 11 columns
    with pytest.raises(NumericalError, match="need n >= 11"):
        project(ds, plan, 3)

import json
from math import comb

import numpy as np
import pytest

from magiciv import ConfigError, build_plan, eval_basis, eval_demeaned
from magiciv.interactions import (
    basis_dim,
    basis_matrix,
    demeaned_matrix,
    plan_from_jsonable,
    plan_to_jsonable,
)


def test_plan_p3_q2_subsets_and_r():
    plan = build_plan(3, 2)
    assert plan.subsets_by_order[2] == ((0, 1), (0, 2), (1, 2))
    assert plan.r == 3


@pytest.mark.parametrize("p,q,r", [(10, 2, 45), (20, 2, 190), (3, 3, 4)])
def test_plan_component_counts(p, q, r):
    assert build_plan(p, q).r == r


def test_plan_counts_match_binomials():
    plan = build_plan(6, 4)
    for k in range(1, 5):
        assert len(plan.subsets_by_order[k]) == comb(6, k)
    assert plan.r == sum(comb(6, k) for k in range(2, 5))


def test_plan_guards():
    with pytest.raises(ConfigError, match="requires p >= 2"):
        build_plan(1, 2)
    with pytest.raises(ConfigError, match="must be >= 2"):
        build_plan(3, 1)
    with pytest.raises(ConfigError, match="exceeds instrument count"):
        build_plan(3, 4)
    with pytest.raises(ConfigError, match="guard"):
        build_plan(60, 30)


def test_eval_demeaned_examples():
    plan = build_plan(3, 2)
    got = eval_demeaned(np.array([1.0, 0.0, 1.0]), np.full(3, 0.5), plan)
    assert np.allclose(got, [-0.25, 0.25, -0.25], atol=1e-15)

    mu = np.array([0.3, 0.7, 0.5])
    assert np.allclose(eval_demeaned(mu, mu, plan), 0.0, atol=1e-15)

    plan2 = build_plan(2, 2)
    got2 = eval_demeaned(np.array([1.0, 1.0]), np.array([0.3, 0.6]), plan2)
    assert np.allclose(got2, [0.7 * 0.4], atol=1e-15)


def test_eval_basis_examples():
    plan2 = build_plan(2, 2)
    assert eval_basis(np.array([1.0, 0.0]), plan2, 2).tolist() == [1.0, 1.0, 0.0]

    plan3 = build_plan(3, 3)
    got = eval_basis(np.array([1.0, 0.0, 1.0]), plan3, 3)
    assert got.tolist() == [1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]

    assert eval_basis(np.zeros(3), plan3, 3).tolist() == [1.0] + [0.0] * 6
    assert basis_dim(3, 3) == 7


def test_basis_order_errors():
    plan = build_plan(3, 2)
    with pytest.raises(ConfigError, match="outside valid range"):
        basis_matrix(np.zeros((2, 3)), plan, 3)
    with pytest.raises(ConfigError, match="does not match plan"):
        eval_basis(np.zeros(4), plan, 2)
    with pytest.raises(ConfigError, match="mu must have length"):
        eval_demeaned(np.zeros(3), np.zeros(2), plan)


def test_demeaned_at_zero_matches_raw_products():
    plan = build_plan(4, 3)
    rng = np.random.default_rng(5)
    z = rng.standard_normal((10, 4))
    got = demeaned_matrix(z, np.zeros(4), plan)
    col = 0
    for k in (2, 3):
        for s in plan.subsets_by_order[k]:
            assert np.allclose(got[:, col], z[:, list(s)].prod(axis=1), atol=1e-14)
            col += 1


def test_order1_demeaned_averages_to_zero():
    rng = np.random.default_rng(9)
    z = (rng.random((64, 4)) < 0.37).astype(float)
    mu_hat = z.mean(axis=0)
    centered_sums = (z - mu_hat).sum(axis=0)
    assert np.all(np.abs(centered_sums) <= 1e-12 * z.shape[0])


def test_plan_serialization_roundtrip():
    plan = build_plan(5, 3)
    payload = json.loads(json.dumps(plan_to_jsonable(plan)))
    back = plan_from_jsonable(payload)
    assert back.p == plan.p and back.q == plan.q and back.r == plan.r
    assert back.subsets_by_order == dict(plan.subsets_by_order)
    z = np.random.default_rng(2).standard_normal((6, 5))
    mu = z.mean(axis=0)
    assert np.array_equal(demeaned_matrix(z, mu, plan), demeaned_matrix(z, mu, back))


def test_order_slices_cover_r():
    plan = build_plan(5, 3)
    slices = plan.order_slices()
    assert slices[2] == slice(0, 10)
    assert slices[3] == slice(10, 20)

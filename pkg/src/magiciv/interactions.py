"""Interaction subset enumeration and product evaluation.

Component ordering is fixed once and for all: ascending interaction order
k, lexicographic subsets within each order. Every serialized result indexes
interaction components by this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Iterable, Mapping, Optional

import numpy as np

from .errors import ConfigError

__all__ = [
    "InteractionPlan",
    "build_plan",
    "eval_demeaned",
    "eval_basis",
    "demeaned_matrix",
    "basis_matrix",
    "basis_dim",
    "plan_to_jsonable",
    "plan_from_jsonable",
]

# Hard cap on the total number of enumerated subsets (orders 1..q).
MAX_SUBSETS = 10**6


@dataclass(frozen=True, eq=False)
class InteractionPlan:
    """Enumerated instrument subsets for interaction orders 1..q.

    ``subsets_by_order[k]`` lists the size-k index subsets in lexicographic
    order; r counts the subsets of orders 2..q (the moment components).
    Order-1 subsets are kept because the non-demeaned basis needs them.
    """

    p: int
    q: int
    subsets_by_order: Mapping[int, tuple[tuple[int, ...], ...]]
    r: int

    def order_slices(self) -> dict[int, slice]:
        """Column ranges of each order-k block inside the stacked r columns."""
        out = {}
        start = 0
        for k in range(2, self.q + 1):
            width = len(self.subsets_by_order[k])
            out[k] = slice(start, start + width)
            start += width
        return out


def build_plan(p: int, q: int) -> InteractionPlan:
    """Enumerate all interaction subsets of orders 1..q over p instruments."""
    if p < 2:
        raise ConfigError(f"q >= 2 requires p >= 2 (got p={p})")
    if q < 2:
        raise ConfigError(f"interaction order q must be >= 2 (got q={q})")
    if q > p:
        raise ConfigError(f"interaction order q={q} exceeds instrument count p={p}")
    total = sum(comb(p, k) for k in range(1, q + 1))
    if total > MAX_SUBSETS:
        raise ConfigError(
            f"plan would enumerate {total} subsets, exceeding the {MAX_SUBSETS} guard"
        )
    subsets = {
        k: tuple(combinations(range(p), k)) for k in range(1, q + 1)
    }
    r = sum(len(subsets[k]) for k in range(2, q + 1))
    return InteractionPlan(p=p, q=q, subsets_by_order=subsets, r=r)


def _check_width(z: np.ndarray, plan: InteractionPlan) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.shape[1] != plan.p:
        raise ConfigError(
            f"row width {z.shape[1]} does not match plan built for p={plan.p}"
        )
    return z


def demeaned_matrix(
    z: np.ndarray,
    mu: np.ndarray,
    plan: InteractionPlan,
    orders: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """n x r matrix of demeaned interaction products, orders 2..q in plan order.

    Column for subset x holds prod_{j in x} (z_j - mu_j). Restrict to a block
    with ``orders``.
    """
    z = _check_width(z, plan)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (plan.p,):
        raise ConfigError(f"mu must have length p={plan.p}")
    zc = z - mu
    which = tuple(orders) if orders is not None else tuple(range(2, plan.q + 1))
    for k in which:
        if not 2 <= k <= plan.q:
            raise ConfigError(f"order {k} outside plan range 2..{plan.q}")
    n = z.shape[0]
    width = sum(len(plan.subsets_by_order[k]) for k in which)
    out = np.empty((n, width))
    start = 0
    for k in which:
        idx = np.array(plan.subsets_by_order[k], dtype=np.intp)  # (m_k, k)
        stop = start + idx.shape[0]
        np.prod(zc[:, idx], axis=2, out=out[:, start:stop])
        start = stop
    return out


def eval_demeaned(z_row: np.ndarray, mu: np.ndarray, plan: InteractionPlan) -> np.ndarray:
    """Demeaned interaction vector (length r) for a single observation."""
    return demeaned_matrix(np.asarray(z_row, dtype=float)[None, :], mu, plan)[0]


def basis_dim(p: int, k: int) -> int:
    """Width of the non-demeaned basis: 1 + sum_{j<k} C(p, j)."""
    return 1 + sum(comb(p, j) for j in range(1, k))


def basis_matrix(z: np.ndarray, plan: InteractionPlan, k: int) -> np.ndarray:
    """n-row design with intercept then raw products over subsets of sizes 1..k-1."""
    if not 2 <= k <= plan.q:
        raise ConfigError(f"basis order k={k} outside valid range 2..{plan.q}")
    z = _check_width(z, plan)
    n = z.shape[0]
    out = np.empty((n, basis_dim(plan.p, k)))
    out[:, 0] = 1.0
    start = 1
    for j in range(1, k):
        idx = np.array(plan.subsets_by_order[j], dtype=np.intp)
        stop = start + idx.shape[0]
        np.prod(z[:, idx], axis=2, out=out[:, start:stop])
        start = stop
    return out


def eval_basis(z_row: np.ndarray, plan: InteractionPlan, k: int) -> np.ndarray:
    """Non-demeaned basis vector (1, mains, ..., order k-1 products) for one row."""
    return basis_matrix(np.asarray(z_row, dtype=float)[None, :], plan, k)[0]


def plan_to_jsonable(plan: InteractionPlan) -> dict:
    """JSON-ready plan: per-order lists of index tuples."""
    return {
        "p": plan.p,
        "q": plan.q,
        "r": plan.r,
        "orders": {
            str(k): [list(s) for s in plan.subsets_by_order[k]]
            for k in range(1, plan.q + 1)
        },
    }


def plan_from_jsonable(payload: Mapping) -> InteractionPlan:
    """Rebuild a plan from its serialized form, preserving component positions."""
    subsets = {
        int(k): tuple(tuple(int(i) for i in s) for s in lst)
        for k, lst in payload["orders"].items()
    }
    plan = InteractionPlan(
        p=int(payload["p"]),
        q=int(payload["q"]),
        subsets_by_order=subsets,
        r=int(payload["r"]),
    )
    return plan

"""Continuously updated GMM: objective, minimization, inference, J-test.

The objective is Q(beta) = 0.5 * gbar' Omega(beta)^{-1} gbar with both the
moment mean and the weighting matrix re-evaluated at every candidate beta.
Because gbar is affine and Omega quadratic in beta, first and second
derivatives of Q are available in closed form; the curvature feeds the
sandwich variance estimator, and 2n * Q(beta_hat) is referred to a
chi-square with r-1 degrees of freedom for the overidentification test.

Minimization is global-then-local: a uniform grid over the parameter
interval guards against the multiple local minima a ratio of quadratics can
have, and golden-section search refines the bracketing interval around the
grid minimum. Near-singular weighting matrices are handled by a ridge
ladder that scales with trace(Omega)/r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import Dataset
from .errors import ConfigError, NumericalError
from .interactions import build_plan
from .moments import MomentComponents, build_components, gbar, omega
from .nuisance import fit_nuisance

__all__ = [
    "CueResult",
    "MinimizeResult",
    "objective",
    "objective_derivatives",
    "minimize",
    "variance",
    "overid_test",
    "chisq_cdf",
    "chisq_quantile",
    "estimate_cue",
]

DEFAULT_BOUNDS = (-10.0, 10.0)
DEFAULT_GRID_POINTS = 512
DEFAULT_TOL = 1e-9

# Ridge multipliers applied to trace(Omega)/r, escalating by 10x.
_RIDGE_MULTIPLIERS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# chi-square special functions
# ---------------------------------------------------------------------------

_GAMMA_MAX_ITER = 500


def _gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x).

    Series expansion for x < a + 1, Lentz continued fraction for the upper
    tail otherwise; both converge to near machine precision.
    """
    if x < 0.0 or a <= 0.0:
        raise ConfigError("incomplete gamma needs x >= 0 and a > 0")
    if x == 0.0:
        return 0.0
    log_prefactor = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(_GAMMA_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                return total * math.exp(log_prefactor)
        raise NumericalError("incomplete gamma series did not converge")
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            return 1.0 - math.exp(log_prefactor) * h
    raise NumericalError("incomplete gamma continued fraction did not converge")


def chisq_cdf(x: float, df: int) -> float:
    """Chi-square CDF via the regularized lower incomplete gamma."""
    if df < 1:
        raise ConfigError(f"degrees of freedom must be >= 1 (got {df})")
    if x < 0.0:
        raise ConfigError(f"chi-square CDF needs x >= 0 (got {x})")
    return _gammainc_lower(0.5 * df, 0.5 * x)


def _chisq_pdf(x: float, df: int) -> float:
    if x <= 0.0:
        return 0.0
    half = 0.5 * df
    return math.exp(
        (half - 1.0) * math.log(x) - 0.5 * x - math.lgamma(half) - half * math.log(2.0)
    )


def chisq_quantile(alpha: float, df: int) -> float:
    """The (1 - alpha) quantile of the chi-square distribution with df dof.

    Finds the root of CDF(x) = 1 - alpha by monotone bracketing followed by
    Newton steps safeguarded with bisection, to 1e-10 relative accuracy.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1) (got {alpha})")
    if df < 1:
        raise ConfigError(f"degrees of freedom must be >= 1 (got {df})")
    target = 1.0 - alpha
    lo = 0.0
    hi = df + 10.0 * math.sqrt(2.0 * df) + 10.0
    for _ in range(200):
        if chisq_cdf(hi, df) >= target:
            break
        hi *= 2.0
    else:
        raise NumericalError("failed to bracket the chi-square quantile")
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chisq_cdf(x, df) - target
        if f > 0.0:
            hi = x
        else:
            lo = x
        deriv = _chisq_pdf(x, df)
        step_ok = False
        if deriv > 0.0:
            x_new = x - f / deriv
            if lo < x_new < hi:
                step_ok = True
        if not step_ok:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-10 * max(1.0, abs(x_new)):
            return x_new
        x = x_new
    raise NumericalError("chi-square quantile iteration did not converge")


# ---------------------------------------------------------------------------
# objective and derivatives
# ---------------------------------------------------------------------------


def _factor(om: np.ndarray, ridge: float):
    if ridge > 0.0:
        om = om + ridge * np.eye(om.shape[0])
    return cho_factor(om, lower=True, check_finite=False)


def objective(mc: MomentComponents, beta: float, ridge: float = 0.0) -> float:
    """CUE objective 0.5 * gbar' (Omega + ridge I)^{-1} gbar at the given ridge.

    The weighting matrix is factorized, never inverted. Raises
    :class:`NumericalError` when the factorization fails at this ridge.
    """
    g = gbar(mc, beta)
    if not g.any():
        return 0.0  # exact zero of every moment: the objective's infimum
    om = omega(mc, beta)
    try:
        factor = _factor(om, ridge)
    except LinAlgError:
        raise NumericalError(
            f"weighting matrix factorization failed at beta={beta:.6g}, "
            f"ridge={ridge:.3g} (condition estimate {np.linalg.cond(om):.3e})"
        ) from None
    return 0.5 * float(g @ cho_solve(factor, g, check_finite=False))


def _eval_objective(mc: MomentComponents, beta: float, base_ridge: float = 0.0):
    """Objective via the ridge ladder. Returns (value, solve u, factor, ridge).

    ``base_ridge`` is the user's ridge policy: it is always applied, and the
    ladder escalates on top of it only when factorization still fails.
    """
    g = gbar(mc, beta)
    om = omega(mc, beta)
    scale = max(float(np.trace(om)) / max(mc.r, 1), np.finfo(float).tiny)
    for mult in _RIDGE_MULTIPLIERS:
        ridge = base_ridge + mult * scale
        try:
            factor = _factor(om, ridge)
        except LinAlgError:
            continue
        u = cho_solve(factor, g, check_finite=False)
        return 0.5 * float(g @ u), u, factor, ridge
    raise NumericalError(
        f"weighting matrix factorization failed at beta={beta:.6g} even after "
        f"ridge escalation (condition estimate {np.linalg.cond(om):.3e})"
    )


def objective_derivatives(
    mc: MomentComponents, beta: float, base_ridge: float = 0.0
) -> tuple[float, float, float, float]:
    """Objective value with analytic first and second beta-derivatives.

    With g(beta) = abar - beta*bbar and Omega(beta) = s0 - beta*s1 + beta^2*s2,

        Q   = 0.5 g' u,                      u = Omega^{-1} g
        Q'  = (-bbar)' u - 0.5 u' Omega' u
        Q'' = w' Omega^{-1} w - u' s2 u,     w = -bbar - Omega' u

    where Omega' = -s1 + 2 beta s2. Returns (Q, Q', Q'', ridge_used).
    """
    q, u, factor, ridge = _eval_objective(mc, beta, base_ridge)
    dom = -mc.s1 + 2.0 * beta * mc.s2
    dom_u = dom @ u
    dq = float(-mc.bbar @ u) - 0.5 * float(u @ dom_u)
    w = -mc.bbar - dom_u
    d2q = float(w @ cho_solve(factor, w, check_finite=False)) - float(u @ (mc.s2 @ u))
    return q, dq, d2q, ridge


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimizeResult:
    beta_hat: float
    q_min: float
    boundary_flag: bool
    ridge_used: bool


def minimize(
    mc: MomentComponents,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    grid_points: int = DEFAULT_GRID_POINTS,
    tol: float = DEFAULT_TOL,
    ridge: float = 0.0,
) -> MinimizeResult:
    """Global grid scan plus golden-section refinement of the CUE objective.

    Grid ties break toward the smallest beta; the boundary flag marks a
    minimizer within tol of either bound (an identification warning, not an
    error). After the interval shrinks below tol, a few safeguarded Newton
    steps on the analytic gradient polish the point: near a flat minimum,
    function-value comparisons drown in rounding while the gradient root
    stays sharply determined. If some beta drives every moment to exactly
    zero (only possible when the stacked means are proportional), that root
    is evaluated as an extra candidate, since no grid can be relied on to
    contain it.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not lo < hi:
        raise ConfigError(f"invalid bounds [{lo}, {hi}]")
    if grid_points < 3:
        raise ConfigError(f"grid_points must be >= 3 (got {grid_points})")
    if tol <= 0.0:
        raise ConfigError("tol must be positive")
    if ridge < 0.0:
        raise ConfigError("ridge must be >= 0")

    any_ridge = False

    def f(beta: float) -> float:
        nonlocal any_ridge
        value, _, _, used = _eval_objective(mc, beta, ridge)
        if used > 0.0:
            any_ridge = True
        return value

    grid = np.linspace(lo, hi, grid_points)
    values = np.empty(grid_points)
    for i, beta in enumerate(grid):
        try:
            values[i] = f(float(beta))
        except NumericalError:
            values[i] = np.inf
        if not np.isfinite(values[i]):
            values[i] = np.inf
    if not np.any(np.isfinite(values)):
        raise NumericalError("objective is non-finite at every grid point")
    i_min = int(np.argmin(values))  # first occurrence: smallest beta wins ties

    bracket_lo = float(grid[max(i_min - 1, 0)])
    bracket_hi = float(grid[min(i_min + 1, grid_points - 1)])
    best_beta = float(grid[i_min])
    best_val = float(values[i_min])

    a, b = bracket_lo, bracket_hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
    for cand, val in ((x1, f1), (x2, f2)):
        if val < best_val or (val == best_val and cand < best_beta):
            best_beta, best_val = cand, val

    # Newton polish, confined to the grid bracket (same basin).
    beta_p = best_beta
    polished = False
    for _ in range(30):
        _, dq, d2q, used = objective_derivatives(mc, beta_p, ridge)
        if used > 0.0:
            any_ridge = True
        if not (d2q > 0.0 and math.isfinite(dq)):
            break
        cand = beta_p - dq / d2q
        if not (bracket_lo < cand < bracket_hi):
            break
        done = abs(cand - beta_p) <= 1e-13 * max(1.0, abs(cand))
        beta_p = cand
        if done:
            polished = True
            break
    if polished:
        val_p = f(beta_p)
        if val_p <= best_val + 1e-9 * max(1.0, abs(best_val)):
            best_beta, best_val = beta_p, min(val_p, best_val)

    # exact-root candidate: gbar(beta0) == 0 makes the objective exactly 0
    denom = float(mc.bbar @ mc.bbar)
    if denom > 0.0:
        beta0 = float(mc.abar @ mc.bbar) / denom
        if lo <= beta0 <= hi and not gbar(mc, beta0).any():
            val0 = f(beta0)
            if val0 < best_val or (val0 == best_val and beta0 < best_beta):
                best_beta, best_val = beta0, val0

    boundary = (best_beta - lo <= tol) or (hi - best_beta <= tol)
    return MinimizeResult(
        beta_hat=best_beta, q_min=best_val, boundary_flag=boundary, ridge_used=any_ridge
    )


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------


def variance(
    mc: MomentComponents, beta_hat: float, ridge: float = 0.0
) -> tuple[float, float]:
    """Sandwich variance of the estimator and its standard error.

    v_hat = (D' Omega^{-1} D) / H^2 with H the analytic objective curvature
    at beta_hat and

        D = E_n[G] - E_n[G g'] Omega^{-1} E_n[g],   G_i = -b_i.

    The standard error is sqrt(v_hat / n). A nonpositive curvature at the
    reported minimum signals a non-convex pathology and raises.
    """
    q, _, h, _ = objective_derivatives(mc, beta_hat, ridge)
    if not h > 0.0:
        raise NumericalError(
            f"nonpositive objective curvature at beta_hat ({h:.3e}); variance unreliable"
        )
    _, u, factor, _ = _eval_objective(mc, beta_hat, ridge)
    c_ba = mc.c_ab.T
    # E_n[G g'] = -(c_ba - beta*s2); D = -bbar - E_n[G g'] u
    d_vec = -mc.bbar + (c_ba - beta_hat * mc.s2) @ u
    v_hat = float(d_vec @ cho_solve(factor, d_vec, check_finite=False)) / (h * h)
    return v_hat, math.sqrt(v_hat / mc.n)


def overid_test(
    mc: MomentComponents, beta_hat: float, q_min: float
) -> tuple[float, int, float]:
    """J statistic 2n*Q(beta_hat), its degrees of freedom r-1, and p-value."""
    if mc.r < 2:
        raise ConfigError(
            "overidentification test undefined for r = 1 (no overidentifying restrictions)"
        )
    j_stat = 2.0 * mc.n * q_min
    df = mc.r - 1
    return j_stat, df, 1.0 - chisq_cdf(j_stat, df)


@dataclass(frozen=True)
class CueResult:
    """Point estimate with inference and overidentification diagnostics.

    j_pvalue is None when r = 1 (the test is not applicable, never p = 1).
    """

    beta_hat: float
    se: float
    ci_low: float
    ci_high: float
    ci_level: float
    q_min: float
    j_stat: float
    j_df: int
    j_pvalue: Optional[float]
    r: int
    n: int
    p: int
    q: int
    boundary_flag: bool
    ridge_used: bool


def estimate_cue(
    ds: Dataset,
    q: int = 2,
    bounds: tuple[float, float] = DEFAULT_BOUNDS,
    grid_points: int = DEFAULT_GRID_POINTS,
    tol: float = DEFAULT_TOL,
    ci_level: float = 0.95,
    ridge: float = 0.0,
) -> CueResult:
    """Full estimation pipeline: plan, nuisance, moments, CUE, inference.

    ``ridge`` is an always-on base ridge on the weighting matrix (the
    escalation ladder still engages on top of it when factorization fails);
    the default 0.0 leaves regularization entirely to the ladder.
    """
    if not 0.0 < ci_level < 1.0:
        raise ConfigError(f"ci_level must lie in (0, 1) (got {ci_level})")
    plan = build_plan(ds.p, q)
    nuis = fit_nuisance(ds, plan)
    mc = build_components(ds, nuis, plan)
    fit = minimize(mc, bounds=bounds, grid_points=grid_points, tol=tol, ridge=ridge)
    v_hat, se = variance(mc, fit.beta_hat, ridge=ridge)
    z = math.sqrt(chisq_quantile(1.0 - ci_level, 1))
    if mc.r >= 2:
        j_stat, j_df, j_pvalue = overid_test(mc, fit.beta_hat, fit.q_min)
    else:
        j_stat, j_df, j_pvalue = 2.0 * mc.n * fit.q_min, 0, None
    return CueResult(
        beta_hat=fit.beta_hat,
        se=se,
        ci_low=fit.beta_hat - z * se,
        ci_high=fit.beta_hat + z * se,
        ci_level=ci_level,
        q_min=fit.q_min,
        j_stat=j_stat,
        j_df=j_df,
        j_pvalue=j_pvalue,
        r=mc.r,
        n=mc.n,
        p=ds.p,
        q=q,
        boundary_flag=fit.boundary_flag,
        ridge_used=fit.ridge_used,
    )

"""Portfolio and event-rate risk functionals built on fitted GP models.

Under a shared shape parameter, positive weighted sums of GP excesses are
univariate GP with the weighted sum of scales, which gives closed-form
Value-at-Risk and Expected Shortfall for portfolio losses.  The
probability of a positive weighted sum is estimated either binomially
from the data or by simulation from the fitted multivariate model; both
estimates can be combined with delta-method confidence intervals.  For
event risks, the yearly number of exceedances of a critical level follows
a Poisson law whose mean couples the event rate with the fitted excess
distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GpModel, InvalidParameterError
from .fit import FitResult
from .simulate import sample_gp_R_structured, sample_model


@dataclass(frozen=True)
class Portfolio:
    """Positive weights on the components of a fitted shared-shape model."""

    weights: np.ndarray
    thresholds: np.ndarray
    fit: FitResult
    budget: float | None = None

    def __post_init__(self):
        a = np.asarray(self.weights, dtype=float)
        u = np.asarray(self.thresholds, dtype=float)
        if np.any(a <= 0):
            raise InvalidParameterError("portfolio weights must be positive")
        if a.size != u.size:
            raise InvalidParameterError("weights and thresholds length mismatch")
        if self.budget is not None and not math.isclose(a.sum(), self.budget, rel_tol=1e-9):
            raise InvalidParameterError(
                f"weights sum to {a.sum():g}, declared budget is {self.budget:g}"
            )
        margins = self.fit.model.margins
        if np.ptp(margins.gamma_arr) != 0:
            raise InvalidParameterError("portfolio risk formulas require a shared shape")
        object.__setattr__(self, "weights", a)
        object.__setattr__(self, "thresholds", u)

    @property
    def gamma(self) -> float:
        return float(self.fit.model.margins.gamma[0])

    @property
    def sum_scale(self) -> float:
        return float(self.weights @ self.fit.model.margins.sigma_arr)

    @property
    def sum_threshold(self) -> float:
        return float(self.weights @ self.thresholds)


def _var_formula(au: float, asig: float, gamma: float, phi: float, p: float) -> float:
    if gamma == 0.0:
        return au + asig * math.log(phi / p)
    return au + asig / gamma * ((phi / p) ** gamma - 1.0)


def var(portfolio: Portfolio, phi: float, p: float) -> float:
    """Unconditional 1-p quantile of the weighted loss sum."""
    if not (0.0 < p < phi <= 1.0):
        raise InvalidParameterError("need 0 < p < phi <= 1")
    return _var_formula(portfolio.sum_threshold, portfolio.sum_scale,
                        portfolio.gamma, phi, p)


def es(portfolio: Portfolio, phi: float, p: float) -> float:
    """Expected loss beyond the VaR level; defined for shape < 1."""
    gamma = portfolio.gamma
    if gamma >= 1.0:
        raise InvalidParameterError("expected shortfall requires gamma < 1")
    v = var(portfolio, phi, p)
    return v + (portfolio.sum_scale + gamma * (v - portfolio.sum_threshold)) / (1.0 - gamma)


def phi_binomial(data, portfolio: Portfolio) -> tuple[float, float]:
    """Binomial MLE of P(sum_j a_j (Y_j - u_j) > 0) with its standard error."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    s = (data - portfolio.thresholds) @ portfolio.weights
    n = s.size
    if n < 1:
        raise InvalidParameterError("need at least one observation")
    k = int((s > 0).sum())
    phat = k / n
    return phat, math.sqrt(phat * (1.0 - phat) / n)


def p_theta(model: GpModel, portfolio: Portfolio, nsim: int = 100_000,
            rng=None) -> tuple[float, float]:
    """Model probability that the weighted excess sum is positive, given an
    exceedance; Monte Carlo over the fitted model."""
    rng = rng if rng is not None else np.random.default_rng(0)
    batch = sample_model(model, nsim, rng)
    pos = (batch.x @ portfolio.weights) > 0
    if batch.n == 0:
        raise InvalidParameterError("sampler returned no draws")
    est = float(pos.mean())
    return est, math.sqrt(est * (1.0 - est) / nsim)


def phi_model(model: GpModel, portfolio: Portfolio, data, nsim: int = 100_000,
              rng=None) -> tuple[float, float]:
    """Combined estimate of phi: model-based p(theta) times the empirical
    fraction of rows exceeding the threshold somewhere."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    exceed = (data > portfolio.thresholds).any(axis=1)
    phi_tilde = float(exceed.mean())
    pt, se = p_theta(model, portfolio, nsim=nsim, rng=rng)
    return pt * phi_tilde, se * phi_tilde


def _sum_scale_variance(portfolio: Portfolio) -> tuple[float, float, float] | None:
    """(var of a'sigma, var of gamma, their covariance) from the fit, if
    the covariance is available."""
    fit = portfolio.fit
    if fit.cov is None:
        return None
    names = fit.parameter_names
    sig_idx = [i for i, nm in enumerate(names) if nm.startswith("sigma")]
    gam_idx = [i for i, nm in enumerate(names) if nm == "gamma" or nm.startswith("gamma")]
    if not sig_idx or not gam_idx:
        return None
    a = portfolio.weights
    cov = np.asarray(fit.cov)
    w = a if len(sig_idx) == a.size else np.array([a.sum()])
    var_s = float(w @ cov[np.ix_(sig_idx, sig_idx)] @ w)
    g = gam_idx[0]
    var_g = float(cov[g, g])
    cov_sg = float(w @ cov[np.ix_(sig_idx, [g])].ravel())
    return var_s, var_g, cov_sg


def _risk_delta_ci(fn, portfolio, phi, phi_var, p, level=0.95):
    """Delta-method CI treating (a'sigma, gamma) from the fit and the
    binomial phi as independent blocks."""
    from scipy.stats import norm

    pieces = _sum_scale_variance(portfolio)
    au = portfolio.sum_threshold
    asig = portfolio.sum_scale
    gam = portfolio.gamma
    val = fn(au, asig, gam, phi, p)
    if pieces is None:
        return val, None, None
    var_s, var_g, cov_sg = pieces
    h_s = 1e-6 * max(asig, 1e-12)
    h_g = 1e-6
    h_p = 1e-6 * max(phi, 1e-12)
    d_s = (fn(au, asig + h_s, gam, phi, p) - fn(au, asig - h_s, gam, phi, p)) / (2 * h_s)
    d_g = (fn(au, asig, gam + h_g, phi, p) - fn(au, asig, gam - h_g, phi, p)) / (2 * h_g)
    d_p = (fn(au, asig, gam, phi + h_p, p) - fn(au, asig, gam, phi - h_p, p)) / (2 * h_p)
    variance = (
        d_s * d_s * var_s + d_g * d_g * var_g + 2 * d_s * d_g * cov_sg
        + d_p * d_p * phi_var
    )
    half = norm.ppf(0.5 + level / 2) * math.sqrt(max(variance, 0.0))
    return val, val - half, val + half


def var_with_ci(portfolio: Portfolio, phi: float, phi_var: float, p: float,
                level: float = 0.95):
    if not (0.0 < p < phi <= 1.0):
        raise InvalidParameterError("need 0 < p < phi <= 1")
    return _risk_delta_ci(_var_formula, portfolio, phi, phi_var, p, level)


def es_with_ci(portfolio: Portfolio, phi: float, phi_var: float, p: float,
               level: float = 0.95):
    if portfolio.gamma >= 1.0:
        raise InvalidParameterError("expected shortfall requires gamma < 1")

    def es_formula(au, asig, gam, ph, pp):
        v = _var_formula(au, asig, gam, ph, pp)
        return v + (asig + gam * (v - au)) / (1.0 - gam)

    return _risk_delta_ci(es_formula, portfolio, phi, phi_var, p, level)


# ---------------------------------------------------------------------------
# Poisson event risk


@dataclass(frozen=True)
class EventRiskSpec:
    """Critical levels, a yearly event rate and a fitted structured model."""

    levels: np.ndarray
    zeta: float
    model: GpModel

    def __post_init__(self):
        y = np.asarray(self.levels, dtype=float)
        if self.zeta <= 0:
            raise InvalidParameterError("zeta must be positive")
        if self.model.form != "R":
            raise InvalidParameterError("event rates are defined for structured fits")
        if y.size != self.model.dim:
            raise InvalidParameterError("levels dimension mismatch")
        object.__setattr__(self, "levels", y)


def event_rate(spec: EventRiskSpec, thresholds, nsim: int = 1_000_000, rng=None) -> dict:
    """Poisson rate of yearly events whose excesses exceed the critical level.

    ``mu = zeta * P(X not <= y - u)`` with the probability taken under the
    fitted excess model, estimated from ``nsim`` standard-scale draws; the
    zero-shape case rescales levels by the common sigma, the positive-shape
    case works on the observed scale directly.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    u = np.asarray(thresholds, dtype=float)
    y = spec.levels
    margins = spec.model.margins
    gamma = margins.gamma[0]
    sigma = margins.sigma[0]
    lam = np.asarray(spec.model.generator.lam)
    z = (y - u) / sigma
    if np.any(z < 0):
        raise InvalidParameterError("critical levels must not fall below the threshold")
    if gamma == 0.0:
        batch = sample_gp_R_structured(lam, 1.0, 0.0, nsim, rng)
        hits = (batch.x > z).any(axis=1)
    else:
        batch = sample_gp_R_structured(lam, sigma, gamma, nsim, rng)
        hits = (batch.x > (y - u)).any(axis=1)
    p_exc = float(hits.mean())
    se_p = math.sqrt(p_exc * (1 - p_exc) / nsim)
    mu = spec.zeta * p_exc
    return {
        "mu": mu,
        "mu_se": spec.zeta * se_p,
        "p_exceed": p_exc,
        "p_exactly_one": mu * math.exp(-mu),
        "p_at_least_one": -math.expm1(-mu),
    }


# ---------------------------------------------------------------------------
# portfolio weight grids


def portfolio_grid(model: GpModel, fit: FitResult, data, thresholds, p: float,
                   fixed: dict, budget: float, step: float = 1.0, min_weight: float = 1.0,
                   nsim: int = 100_000, rng=None, use_p_theta: bool = True):
    """VaR over a two-free-weight simplex grid (one weight fixed, last implied).

    ``fixed`` maps one component index to its weight; the remaining budget
    is spread over a grid of the next two components with the final
    component taking the remainder.  A single shared sample of model draws
    prices every cell, so the surface is smooth in the weights.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    data = np.atleast_2d(np.asarray(data, dtype=float))
    u = np.asarray(thresholds, dtype=float)
    d = u.size
    if d != 4 or len(fixed) != 1:
        raise InvalidParameterError("the weight grid expects d = 4 with one fixed weight")
    (j_fix, a_fix), = fixed.items()
    free = [j for j in range(d) if j != j_fix]
    j1, j2, j3 = free
    batch = sample_model(model, nsim, rng) if use_p_theta else None
    exceed_frac = float(((data > u).any(axis=1)).mean())
    rows = []
    grid = np.arange(min_weight, budget - a_fix - 2 * min_weight + 1e-9, step)
    for a1 in grid:
        for a2 in grid:
            a3 = budget - a_fix - a1 - a2
            if a3 < min_weight:
                continue
            a = np.empty(d)
            a[j_fix], a[j1], a[j2], a[j3] = a_fix, a1, a2, a3
            if use_p_theta:
                pt = float(((batch.x @ a) > 0).mean())
                phi = pt * exceed_frac
            else:
                s = (data - u) @ a
                phi = float((s > 0).mean())
            if phi <= p:
                rows.append({"a": a.tolist(), "phi": phi, "var": None})
                continue
            asig = float(a @ model.margins.sigma_arr)
            au = float(a @ u)
            rows.append({
                "a": a.tolist(),
                "phi": phi,
                "var": _var_formula(au, asig, model.margins.gamma[0], phi, p),
            })
    return rows

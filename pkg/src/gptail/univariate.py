"""Univariate generalized Pareto utilities.

Used for marginal initialization, the sum-stability diagnostic and QQ
plots.  Fitting is plain (uncensored) maximum likelihood on positive
excesses with the usual ``(log sigma, gamma)`` reparameterization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .core import InvalidParameterError


def gp_logpdf(x, sigma: float, gamma: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if sigma <= 0:
        raise InvalidParameterError("sigma must be positive")
    if gamma == 0.0:
        return -np.log(sigma) - x / sigma
    z = 1.0 + gamma * x / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log(sigma) - (1.0 / gamma + 1.0) * np.log(z)
    return np.where(z > 0, out, -np.inf)


def gp_survival(x, sigma: float, gamma: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if gamma == 0.0:
        return np.exp(-x / sigma)
    z = np.maximum(1.0 + gamma * x / sigma, 0.0)
    return z ** (-1.0 / gamma)


def gp_quantile(p, sigma: float, gamma: float) -> np.ndarray:
    """Quantile of the GP distribution at probability ``p``."""
    p = np.asarray(p, dtype=float)
    if gamma == 0.0:
        return -sigma * np.log1p(-p)
    return sigma * ((1.0 - p) ** (-gamma) - 1.0) / gamma


@dataclass(frozen=True)
class UnivariateGpFit:
    sigma: float
    gamma: float
    se_sigma: float
    se_gamma: float
    cov: np.ndarray
    loglik: float
    n: int


def gp_fit(excesses, gamma_fixed: float | None = None) -> UnivariateGpFit:
    """Maximum-likelihood GP fit to positive excesses."""
    x = np.asarray(excesses, dtype=float)
    x = x[x > 0]
    n = x.size
    if n < 2:
        raise InvalidParameterError("need at least two positive excesses")
    xbar = x.mean()

    if gamma_fixed is not None:
        def nll(z):
            return -gp_logpdf(x, np.exp(z[0]), gamma_fixed).sum()

        res = optimize.minimize(nll, np.array([np.log(xbar)]), method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10})
        sig = float(np.exp(res.x[0]))
        h = _numeric_hessian(nll, res.x)
        var = 1.0 / h[0, 0] if h[0, 0] > 0 else np.nan
        se_sig = sig * np.sqrt(var)  # delta method through log
        cov = np.array([[se_sig**2, 0.0], [0.0, 0.0]])
        return UnivariateGpFit(sig, gamma_fixed, se_sig, 0.0, cov, -res.fun, n)

    def nll(z):
        return -gp_logpdf(x, np.exp(z[0]), z[1]).sum()

    z0 = np.array([np.log(xbar), 0.1])
    res = optimize.minimize(nll, z0, method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
    sig, gam = float(np.exp(res.x[0])), float(res.x[1])
    h = _numeric_hessian(nll, res.x)
    try:
        cov_z = np.linalg.inv(h)
    except np.linalg.LinAlgError:
        cov_z = np.full((2, 2), np.nan)
    jac = np.diag([sig, 1.0])  # (sigma, gamma) from (log sigma, gamma)
    cov = jac @ cov_z @ jac.T
    return UnivariateGpFit(
        sig, gam, float(np.sqrt(max(cov[0, 0], 0.0))), float(np.sqrt(max(cov[1, 1], 0.0))),
        cov, -res.fun, n,
    )


def _numeric_hessian(f, z, h=1e-4):
    k = z.size
    H = np.empty((k, k))
    f0 = f(z)
    steps = h * np.maximum(1.0, np.abs(z))
    for i in range(k):
        ei = np.zeros(k); ei[i] = steps[i]
        for j in range(i, k):
            ej = np.zeros(k); ej[j] = steps[j]
            fpp = f(z + ei + ej)
            fpm = f(z + ei - ej)
            fmp = f(z - ei + ej)
            fmm = f(z - ei - ej)
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * steps[i] * steps[j])
    return H


def qq_points(sample, sigma: float, gamma: float):
    """Ordered sample versus GP model quantiles at plotting positions i/(n+1).

    Raises if a sample value sits above the model's upper endpoint
    (``gamma < 0`` support violation).
    """
    s = np.sort(np.asarray(sample, dtype=float))
    if s.size == 0:
        raise InvalidParameterError("sample must be non-empty")
    if gamma < 0 and s.max() > -sigma / gamma:
        raise InvalidParameterError(
            "sample exceeds the upper endpoint -sigma/gamma of the fitted GP"
        )
    pp = np.arange(1, s.size + 1) / (s.size + 1.0)
    return s, gp_quantile(pp, sigma, gamma)

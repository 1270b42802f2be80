"""Shared domain types and marginal transformations.

Conventions used throughout the package:

* data vectors live in ``R^d`` with ``d >= 1`` and are stored as 1-d numpy
  arrays; observation matrices are ``(n, d)``;
* "excess scale" means observations shifted by the threshold vector ``u``,
  so the support condition "not all components below threshold" reads
  ``max(x) > 0``;
* "standard scale" means marginal scale 1 and shape 0, obtained through
  the componentwise map implemented by :func:`standard_from_observed`.

Shape parameters equal to zero are represented exactly and all formulas
branch analytically at ``gamma == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GptailError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(GptailError):
    """Parameter vector violates a model constraint (e.g. sigma <= 0)."""


class NumericalError(GptailError):
    """A numerical routine failed to reach its target tolerance."""


def _as_vector(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise InvalidParameterError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class MarginalParams:
    """Per-component scale and shape of the conditional excess margins.

    ``sigma[j] > 0`` is the scale in data units; ``gamma[j]`` is the
    dimensionless shape.  The lower endpoint of margin ``j`` is
    ``-sigma[j]/gamma[j]`` when ``gamma[j] > 0`` and ``-inf`` otherwise.
    """

    sigma: tuple[float, ...]
    gamma: tuple[float, ...]

    def __init__(self, sigma, gamma):
        sig = _as_vector(sigma, "sigma")
        gam = _as_vector(gamma, "gamma")
        if sig.shape != gam.shape:
            raise InvalidParameterError(
                f"sigma and gamma must have equal length, got {sig.size} and {gam.size}"
            )
        if np.any(sig <= 0):
            raise InvalidParameterError("sigma must be strictly positive")
        object.__setattr__(self, "sigma", tuple(sig))
        object.__setattr__(self, "gamma", tuple(gam))

    @property
    def dim(self) -> int:
        return len(self.sigma)

    @property
    def sigma_arr(self) -> np.ndarray:
        return np.asarray(self.sigma)

    @property
    def gamma_arr(self) -> np.ndarray:
        return np.asarray(self.gamma)

    def lower_endpoint(self) -> np.ndarray:
        """Componentwise lower endpoint of the excess margins."""
        sig, gam = self.sigma_arr, self.gamma_arr
        out = np.full(self.dim, -np.inf)
        pos = gam > 0
        out[pos] = -sig[pos] / gam[pos]
        return out


def marginal_conditional_survival(margins: MarginalParams, j: int, x: float) -> float:
    """P[X_j > x | X_j > 0] for a generalized Pareto margin, x >= 0."""
    if not np.isfinite(x):
        raise InvalidParameterError("x must be finite")
    if x < 0:
        raise InvalidParameterError("x must be non-negative")
    sig = margins.sigma[j]
    gam = margins.gamma[j]
    if gam == 0.0:
        return float(np.exp(-x / sig))
    base = 1.0 + gam * x / sig
    if base <= 0.0:
        return 0.0
    return float(base ** (-1.0 / gam))


def observed_from_standard(x0, margins: MarginalParams) -> np.ndarray:
    """Map standard-scale vectors to the observed scale.

    Component ``j`` is ``sigma_j * (exp(gamma_j * x0_j) - 1) / gamma_j``,
    read as ``sigma_j * x0_j`` in the ``gamma_j == 0`` limit.  Acts on the
    trailing axis so both single vectors and ``(n, d)`` batches work.
    """
    x0 = np.asarray(x0, dtype=float)
    sig, gam = margins.sigma_arr, margins.gamma_arr
    out = np.empty_like(x0, dtype=float)
    zero = gam == 0.0
    out[..., zero] = sig[zero] * x0[..., zero]
    nz = ~zero
    out[..., nz] = sig[nz] * np.expm1(gam[nz] * x0[..., nz]) / gam[nz]
    return out


def standard_from_observed(x, margins: MarginalParams) -> np.ndarray:
    """Inverse of :func:`observed_from_standard`.

    Returns ``-inf`` in components at or below the lower endpoint, which
    callers interpret as an off-support point.
    """
    x = np.asarray(x, dtype=float)
    sig, gam = margins.sigma_arr, margins.gamma_arr
    out = np.empty_like(x, dtype=float)
    zero = gam == 0.0
    out[..., zero] = x[..., zero] / sig[zero]
    nz = ~zero
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = gam[nz] * x[..., nz] / sig[nz]
        val = np.log1p(ratio) / gam[nz]
        val = np.where(ratio <= -1.0, -np.inf, val)
    out[..., nz] = val
    return out


def log_jacobian_observed(x, margins: MarginalParams) -> np.ndarray:
    """log of the observed-to-standard density Jacobian, sum_j log(sigma_j + gamma_j x_j).

    Returns ``+inf`` rows where some ``sigma_j + gamma_j x_j <= 0`` (off
    support); consumers subtract it, yielding ``-inf`` log density.
    """
    x = np.asarray(x, dtype=float)
    den = margins.sigma_arr + margins.gamma_arr * x
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(den > 0, np.log(np.maximum(den, 1e-300)), np.inf)
    return terms.sum(axis=-1)


@dataclass(frozen=True)
class ExceedanceSet:
    """Threshold excesses ``x_i = y_i - u`` with the censoring floor ``v <= 0``.

    Every row satisfies ``max_j x[i, j] > 0``; rows failing that are
    rejected at construction.
    """

    rows: np.ndarray
    threshold: np.ndarray
    censor_floor: np.ndarray

    def __init__(self, rows, threshold, censor_floor):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        u = _as_vector(threshold, "threshold")
        d = u.size
        if rows.shape[1] != d:
            raise InvalidParameterError(
                f"rows have {rows.shape[1]} columns but threshold has length {d}"
            )
        v = np.asarray(censor_floor, dtype=float)
        if v.ndim == 0:
            v = np.full(d, float(v))
        v = _as_vector(v, "censor_floor")
        if v.size != d:
            raise InvalidParameterError("censor_floor length must match dimension")
        if np.any(v > 0):
            raise InvalidParameterError("censor_floor must be <= 0")
        if rows.size and np.any(rows.max(axis=1) <= 0):
            bad = int(np.argmax(rows.max(axis=1) <= 0))
            raise InvalidParameterError(
                f"row {bad} is not an exceedance (all components <= threshold)"
            )
        rows = rows.copy()
        rows.setflags(write=False)
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "threshold", u)
        object.__setattr__(self, "censor_floor", v)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.threshold.size


@dataclass(frozen=True)
class GpModel:
    """A multivariate GP model: generator spec, construction form, margins.

    ``form`` is one of ``"T"`` (standard-scale generator combined with a
    unit-exponential intensity), ``"U"`` (exponential-moment-normalized
    generator) or ``"R"`` (structured model built directly on the observed
    scale).  An R-form model with positive shape requires common scalar
    scale and shape across components.
    """

    generator: "object"
    margins: MarginalParams
    form: str = "T"

    def __post_init__(self):
        if self.form not in ("T", "U", "R"):
            raise InvalidParameterError(f"unknown construction form {self.form!r}")
        if self.generator.dim != self.margins.dim:
            raise InvalidParameterError("generator and margins dimension mismatch")
        if self.form == "R":
            gam = self.margins.gamma_arr
            sig = self.margins.sigma_arr
            if np.any(gam < 0):
                raise InvalidParameterError("R-form models require gamma >= 0")
            if np.ptp(gam) != 0 or np.ptp(sig) != 0:
                raise InvalidParameterError(
                    "R-form models require common scalar sigma and gamma"
                )

    @property
    def dim(self) -> int:
        return self.margins.dim

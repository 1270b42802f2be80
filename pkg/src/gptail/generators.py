"""Parametric generator families for multivariate GP models.

A generator is the random vector whose law, combined with a common
exponential intensity, induces the dependence structure of a multivariate
GP distribution.  Six families are provided:

* ``IndepGumbel`` / ``IndepReverseGumbel`` -- independent (reverse) Gumbel
  components with rate ``alpha_j`` and location ``beta_j``;
* ``IndepReverseExp`` -- independent reverse exponential components on
  ``(-inf, -beta_j)``;
* ``IndepLogGamma`` -- independent components with ``exp(V_j) ~ Gamma(alpha_j, 1)``;
* ``Gaussian`` -- multivariate normal with mean ``beta`` and positive
  definite covariance ``Sigma``;
* ``StructuredExp`` -- log-cumulative sums of independent exponentials
  with mean ``lam_j`` per increment; components are ordered by
  construction.  (``lam`` are the *means*, so the rate of increment ``j``
  is ``1/lam_j``.)

Adding a common constant to a location vector, or rescaling the
``StructuredExp`` means by a common factor, leaves the induced GP
distribution unchanged, so identifiability constraints (``beta[0] == 0``,
``lam[0] == 1``) are enforced at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import InvalidParameterError, _as_vector

_EULER_GAMMA = float(np.euler_gamma)


class GeneratorSpec:
    """Base class for generator specifications.

    Specs are immutable and hashable; parameters are stored as tuples and
    exposed as arrays through properties.  Sampling always takes a
    caller-owned :class:`numpy.random.Generator`.
    """

    family: str = "base"

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def log_density(self, v) -> np.ndarray:
        """log f_V(v); -inf off the support.  v is (d,) or (n, d)."""
        raise NotImplementedError

    def component_cdf(self, j: int, v) -> np.ndarray:
        """P(V_j <= v) for independent-component families."""
        raise InvalidParameterError(
            f"component_cdf is not available for the {self.family} family; "
            "use its dedicated censored path"
        )

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n independent draws from f_V, shape (n, d)."""
        raise NotImplementedError

    def exp_moment(self, j: int) -> float:
        """E[exp(V_j)]; +inf signals that the moment-normalized form is inadmissible."""
        raise NotImplementedError

    def exp_moments(self) -> np.ndarray:
        return np.array([self.exp_moment(j) for j in range(self.dim)])

    @property
    def has_independent_components(self) -> bool:
        return False

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(obj: dict) -> "GeneratorSpec":
        family = obj["family"]
        params = obj["params"]
        cls = _FAMILIES.get(family)
        if cls is None:
            raise InvalidParameterError(f"unknown generator family {family!r}")
        return cls(**params)


def _check_positive(arr: np.ndarray, name: str):
    if np.any(arr <= 0):
        raise InvalidParameterError(f"{name} must be strictly positive")


def _check_first_zero(beta: np.ndarray):
    if beta[0] != 0.0:
        raise InvalidParameterError(
            "beta[0] must be 0 (location is only identified up to a common shift)"
        )


@dataclass(frozen=True, eq=True)
class IndepGumbel(GeneratorSpec):
    """Independent Gumbel components, f_j(v) = a e^{-a(v-b)} exp(-e^{-a(v-b)})."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    family = "indep_gumbel"

    def __init__(self, alpha, beta=None, *, enforce_identifiability: bool = True):
        a = _as_vector(alpha, "alpha")
        b = np.zeros_like(a) if beta is None else _as_vector(beta, "beta")
        if a.shape != b.shape:
            raise InvalidParameterError("alpha and beta must have equal length")
        _check_positive(a, "alpha")
        if enforce_identifiability:
            _check_first_zero(b)
        object.__setattr__(self, "alpha", tuple(a))
        object.__setattr__(self, "beta", tuple(b))

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def has_independent_components(self) -> bool:
        return True

    def _ab(self):
        return np.asarray(self.alpha), np.asarray(self.beta)

    def log_density(self, v) -> np.ndarray:
        a, b = self._ab()
        z = a * (np.asarray(v, dtype=float) - b)
        with np.errstate(over="ignore"):
            return (np.log(a) - z - np.exp(-z)).sum(axis=-1)

    def component_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) - self.beta[j])
        return np.exp(-np.exp(-z))

    def component_log_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) - self.beta[j])
        with np.errstate(over="ignore"):
            return -np.exp(-z)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a, b = self._ab()
        return rng.gumbel(loc=b, scale=1.0 / a, size=(n, self.dim))

    def exp_moment(self, j: int) -> float:
        a = self.alpha[j]
        if a <= 1.0:
            return np.inf
        return float(np.exp(self.beta[j]) * special.gamma(1.0 - 1.0 / a))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"alpha": list(self.alpha), "beta": list(self.beta)}}


@dataclass(frozen=True, eq=True)
class IndepReverseGumbel(GeneratorSpec):
    """Independent reverse Gumbel components, f_j(v) = a e^{a(v-b)} exp(-e^{a(v-b)}).

    The mirror image of :class:`IndepGumbel` (v -> -v, b -> -b); the
    moment-normalized form is admissible for every alpha > 0.
    """

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    family = "indep_reverse_gumbel"

    def __init__(self, alpha, beta=None, *, enforce_identifiability: bool = True):
        a = _as_vector(alpha, "alpha")
        b = np.zeros_like(a) if beta is None else _as_vector(beta, "beta")
        if a.shape != b.shape:
            raise InvalidParameterError("alpha and beta must have equal length")
        _check_positive(a, "alpha")
        if enforce_identifiability:
            _check_first_zero(b)
        object.__setattr__(self, "alpha", tuple(a))
        object.__setattr__(self, "beta", tuple(b))

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def has_independent_components(self) -> bool:
        return True

    def log_density(self, v) -> np.ndarray:
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        z = a * (np.asarray(v, dtype=float) - b)
        with np.errstate(over="ignore"):
            return (np.log(a) + z - np.exp(z)).sum(axis=-1)

    def component_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) - self.beta[j])
        return -np.expm1(-np.exp(z))

    def component_log_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) - self.beta[j])
        with np.errstate(divide="ignore"):
            return np.log(-np.expm1(-np.exp(z)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        return b - rng.gumbel(loc=0.0, scale=1.0, size=(n, self.dim)) / a

    def exp_moment(self, j: int) -> float:
        a = self.alpha[j]
        return float(np.exp(self.beta[j]) * special.gamma(1.0 + 1.0 / a))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"alpha": list(self.alpha), "beta": list(self.beta)}}


@dataclass(frozen=True, eq=True)
class IndepReverseExp(GeneratorSpec):
    """Independent reverse exponential components on (-inf, -beta_j),
    f_j(v) = a e^{a(v+b)}."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    family = "indep_reverse_exp"

    def __init__(self, alpha, beta=None, *, enforce_identifiability: bool = True):
        a = _as_vector(alpha, "alpha")
        b = np.zeros_like(a) if beta is None else _as_vector(beta, "beta")
        if a.shape != b.shape:
            raise InvalidParameterError("alpha and beta must have equal length")
        _check_positive(a, "alpha")
        if enforce_identifiability:
            _check_first_zero(b)
        object.__setattr__(self, "alpha", tuple(a))
        object.__setattr__(self, "beta", tuple(b))

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def has_independent_components(self) -> bool:
        return True

    def log_density(self, v) -> np.ndarray:
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        v = np.asarray(v, dtype=float)
        z = a * (v + b)
        terms = np.where(v < -b, np.log(a) + z, -np.inf)
        return terms.sum(axis=-1)

    def component_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) + self.beta[j])
        return np.minimum(np.exp(np.minimum(z, 0.0)), 1.0)

    def component_log_cdf(self, j: int, v) -> np.ndarray:
        z = self.alpha[j] * (np.asarray(v, dtype=float) + self.beta[j])
        return np.minimum(z, 0.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a = np.asarray(self.alpha)
        b = np.asarray(self.beta)
        return -b - rng.exponential(size=(n, self.dim)) / a

    def exp_moment(self, j: int) -> float:
        a = self.alpha[j]
        return float(a * np.exp(-self.beta[j]) / (1.0 + a))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"alpha": list(self.alpha), "beta": list(self.beta)}}


@dataclass(frozen=True, eq=True)
class IndepLogGamma(GeneratorSpec):
    """Independent log-gamma components: exp(V_j) ~ Gamma(alpha_j, 1)."""

    alpha: tuple[float, ...]
    family = "indep_log_gamma"

    def __init__(self, alpha):
        a = _as_vector(alpha, "alpha")
        _check_positive(a, "alpha")
        object.__setattr__(self, "alpha", tuple(a))

    @property
    def dim(self) -> int:
        return len(self.alpha)

    @property
    def has_independent_components(self) -> bool:
        return True

    def log_density(self, v) -> np.ndarray:
        a = np.asarray(self.alpha)
        v = np.asarray(v, dtype=float)
        with np.errstate(over="ignore"):
            return (a * v - np.exp(v) - special.gammaln(a)).sum(axis=-1)

    def component_cdf(self, j: int, v) -> np.ndarray:
        return special.gammainc(self.alpha[j], np.exp(np.asarray(v, dtype=float)))

    def component_log_cdf(self, j: int, v) -> np.ndarray:
        a = self.alpha[j]
        v = np.asarray(v, dtype=float)
        p = special.gammainc(a, np.exp(v))
        with np.errstate(divide="ignore"):
            direct = np.log(p)
        # leading-order expansion of the lower incomplete gamma for tiny exp(v)
        small = a * v - special.gammaln(a + 1.0)
        return np.where(p > 1e-280, direct, small)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        a = np.asarray(self.alpha)
        return np.log(rng.gamma(shape=a, size=(n, self.dim)))

    def exp_moment(self, j: int) -> float:
        return float(self.alpha[j])

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"alpha": list(self.alpha)}}


@dataclass(frozen=True, eq=True)
class Gaussian(GeneratorSpec):
    """Multivariate Gaussian generator with mean beta and covariance Sigma."""

    beta: tuple[float, ...]
    sigma_mat: tuple[tuple[float, ...], ...]
    family = "gaussian"

    def __init__(self, beta, sigma_mat):
        b = _as_vector(beta, "beta")
        S = np.atleast_2d(np.asarray(sigma_mat, dtype=float))
        if S.shape != (b.size, b.size):
            raise InvalidParameterError("Sigma must be d x d")
        if not np.allclose(S, S.T, atol=1e-12):
            raise InvalidParameterError("Sigma must be symmetric")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise InvalidParameterError("Sigma must be positive definite") from exc
        object.__setattr__(self, "beta", tuple(b))
        object.__setattr__(self, "sigma_mat", tuple(tuple(row) for row in S))

    @property
    def dim(self) -> int:
        return len(self.beta)

    @property
    def beta_arr(self) -> np.ndarray:
        return np.asarray(self.beta)

    @property
    def cov(self) -> np.ndarray:
        return np.asarray(self.sigma_mat)

    def _chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.cov)

    def log_density(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        V = np.atleast_2d(v)
        L = self._chol()
        z = np.linalg.solve(L, (V - self.beta_arr).T).T
        quad = (z * z).sum(axis=1)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out = -0.5 * (self.dim * np.log(2 * np.pi) + logdet + quad)
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        return self.beta_arr + z @ self._chol().T

    def exp_moment(self, j: int) -> float:
        return float(np.exp(self.beta[j] + self.cov[j, j] / 2.0))

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": {"beta": list(self.beta), "sigma_mat": [list(r) for r in self.sigma_mat]},
        }


@dataclass(frozen=True, eq=True)
class StructuredExp(GeneratorSpec):
    """Log-cumulative sums of independent exponentials with means ``lam``.

    ``V_j = log(S_j)`` with ``S_j = E_1 + ... + E_j`` and ``E_i`` exponential
    with mean ``lam_i``.  The components are almost surely increasing, which
    is what makes this family suitable for ordered data.  ``lam[0] == 1`` is
    required since a common rescaling of the means does not change the
    induced GP distribution.
    """

    lam: tuple[float, ...]
    family = "structured_exp"

    def __init__(self, lam, *, enforce_identifiability: bool = True):
        lm = _as_vector(lam, "lam")
        _check_positive(lm, "lam")
        if enforce_identifiability and lm[0] != 1.0:
            raise InvalidParameterError(
                "lam[0] must be 1 (means are only identified up to a common factor)"
            )
        object.__setattr__(self, "lam", tuple(lm))

    @property
    def dim(self) -> int:
        return len(self.lam)

    @property
    def rates(self) -> np.ndarray:
        return 1.0 / np.asarray(self.lam)

    def rate_gaps(self) -> np.ndarray:
        """rho_j - rho_{j+1} with rho_{d+1} = 0, the coefficients multiplying
        exp(v_j) in the joint density."""
        rho = self.rates
        return rho - np.append(rho[1:], 0.0)

    def log_density(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        rho = self.rates
        delta = self.rate_gaps()
        ordered = np.all(np.diff(v, axis=-1) > 0, axis=-1)
        ev = np.exp(v)
        val = (np.log(rho) + v).sum(axis=-1) - (delta * ev).sum(axis=-1)
        return np.where(ordered, val, -np.inf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draws of log(S_1), ..., log(S_d)."""
        return np.log(self.sample_partial_sums(n, rng))

    def sample_partial_sums(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lam = np.asarray(self.lam)
        incr = rng.exponential(scale=lam, size=(n, self.dim))
        return np.cumsum(incr, axis=1)

    def exp_moment(self, j: int) -> float:
        """E[exp(V_j)] = E[S_j] = lam_1 + ... + lam_j."""
        return float(np.sum(self.lam[: j + 1]))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {"lam": list(self.lam)}}


_FAMILIES = {
    cls.family: cls
    for cls in (
        IndepGumbel,
        IndepReverseGumbel,
        IndepReverseExp,
        IndepLogGamma,
        Gaussian,
        StructuredExp,
    )
}


def gen_log_density(spec: GeneratorSpec, v) -> np.ndarray:
    return spec.log_density(v)


def gen_component_cdf(spec: GeneratorSpec, j: int, v) -> np.ndarray:
    return spec.component_cdf(j, v)


def gen_sample(spec: GeneratorSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    return spec.sample(n, rng)


def exp_moment(spec: GeneratorSpec, j: int) -> float:
    return spec.exp_moment(j)

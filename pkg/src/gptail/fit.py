"""Censored maximum-likelihood fitting and model selection.

Models are optimized over an unconstrained internal vector: scale-like
parameters enter through logs, correlation matrices through Cholesky
angles, and tied parameters (common rate, shared shape, ...) through a
single coordinate, so the derivative-free simplex search needs no box
constraints.  Standard errors come from the inverse numerical Hessian of
the negative log-likelihood at the optimum, mapped to the natural scale
by the delta method.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .censoring import negative_log_likelihood
from .core import (
    ExceedanceSet,
    GpModel,
    InvalidParameterError,
    MarginalParams,
    NumericalError,
)
from .generators import (
    Gaussian,
    GeneratorSpec,
    IndepGumbel,
    IndepLogGamma,
    IndepReverseExp,
    IndepReverseGumbel,
    StructuredExp,
)
from .univariate import gp_fit


class FitError(Exception):
    pass


# ---------------------------------------------------------------------------
# correlation-matrix transform (Cholesky angles)


def _expit(z):
    return special.expit(z)


def _logit(p):
    return special.logit(p)


def corr_from_angles_z(z: np.ndarray, d: int) -> np.ndarray:
    """Unconstrained vector of length d(d-1)/2 -> correlation matrix."""
    theta = np.pi * _expit(np.asarray(z, dtype=float))
    L = np.zeros((d, d))
    L[0, 0] = 1.0
    pos = 0
    for i in range(1, d):
        s = 1.0
        for k in range(i):
            L[i, k] = math.cos(theta[pos]) * s
            s *= math.sin(theta[pos])
            pos += 1
        L[i, i] = s
    return L @ L.T


def angles_z_from_corr(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`corr_from_angles_z` for a PD correlation matrix."""
    d = R.shape[0]
    L = np.linalg.cholesky(R)
    z = []
    for i in range(1, d):
        s = 1.0
        for k in range(i):
            c = np.clip(L[i, k] / s, -1.0 + 1e-12, 1.0 - 1e-12)
            theta = math.acos(c)
            z.append(_logit(np.clip(theta / np.pi, 1e-12, 1 - 1e-12)))
            s *= math.sin(theta)
    return np.asarray(z)


# ---------------------------------------------------------------------------
# parameterizations


@dataclass(frozen=True)
class ModelTemplate:
    """Declarative description of a fittable model.

    ``dep`` options by family:

    * gumbel / reverse gumbel / reverse exp: ``alpha`` in {"free", "common"},
      ``beta`` in {"free", "zero"} (first location always pinned to 0);
    * log-gamma: ``alpha`` in {"free", "common"};
    * gaussian: ``beta`` in {"free", "zero"}, correlations always free with
      unit diagonal;
    * structured: means free with ``lam_1 = 1``.

    ``margins`` options: ``sigma`` in {"free", "shared"} or ("fixed", values),
    ``gamma`` in {"free", "shared", "positive"} or ("fixed", values);
    "positive" ties the shape to a single positive value (log transform),
    as the structured observed-scale model requires.
    """

    family: str
    d: int
    form: str = "T"
    dep: tuple = ()
    margins: tuple = (("sigma", "free"), ("gamma", "free"))

    def __post_init__(self):
        object.__setattr__(self, "dep", tuple(sorted(dict(self.dep).items())))
        object.__setattr__(self, "margins", tuple(dict(self.margins).items()))

    @property
    def dep_opts(self) -> dict:
        return dict(self.dep)

    @property
    def margin_opts(self) -> dict:
        return dict(self.margins)

    # -- layout ------------------------------------------------------------

    def blocks(self):
        """Ordered (name, n_free) blocks of the internal vector."""
        d = self.d
        out = []
        dep = self.dep_opts
        if self.family in ("indep_gumbel", "indep_reverse_gumbel", "indep_reverse_exp"):
            out.append(("alpha", 1 if dep.get("alpha", "free") == "common" else d))
            if dep.get("beta", "free") == "free" and d > 1:
                out.append(("beta", d - 1))
        elif self.family == "indep_log_gamma":
            out.append(("alpha", 1 if dep.get("alpha", "free") == "common" else d))
        elif self.family == "gaussian":
            if dep.get("beta", "free") == "free" and d > 1:
                out.append(("beta", d - 1))
            out.append(("corr", d * (d - 1) // 2))
        elif self.family == "structured_exp":
            out.append(("lam", d - 1))
        else:
            raise InvalidParameterError(f"unknown family {self.family}")
        mo = self.margin_opts
        sig = mo.get("sigma", "free")
        if sig == "free":
            out.append(("sigma", d))
        elif sig == "shared":
            out.append(("sigma", 1))
        gam = mo.get("gamma", "free")
        if gam == "free":
            out.append(("gamma", d))
        elif gam in ("shared", "positive"):
            out.append(("gamma", 1))
        return out

    @property
    def n_free(self) -> int:
        return sum(n for _, n in self.blocks())

    def parameter_names(self):
        names = []
        for name, n in self.blocks():
            if name == "beta":
                names += [f"beta_{j + 2}" for j in range(n)]
            elif name == "lam":
                names += [f"lam_{j + 2}" for j in range(n)]
            elif name == "corr":
                pairs = [(i + 1, j + 1) for i in range(self.d) for j in range(i + 1, self.d)]
                names += [f"rho_{a}{b}" for a, b in pairs]
            elif n == 1:
                names.append(name)
            else:
                names += [f"{name}_{j + 1}" for j in range(n)]
        return names

    # -- unpacking ----------------------------------------------------------

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        if z.size != self.n_free:
            raise InvalidParameterError(
                f"parameter vector has size {z.size}, template needs {self.n_free}"
            )
        parts = {}
        pos = 0
        for name, n in self.blocks():
            parts[name] = z[pos : pos + n]
            pos += n
        return parts

    def model(self, z) -> GpModel:
        d = self.d
        parts = self._split(z)
        dep = self.dep_opts
        if self.family in ("indep_gumbel", "indep_reverse_gumbel", "indep_reverse_exp"):
            alpha = np.exp(parts["alpha"])
            if alpha.size == 1:
                alpha = np.repeat(alpha, d)
            beta = np.zeros(d)
            if "beta" in parts:
                beta[1:] = parts["beta"]
            cls = {
                "indep_gumbel": IndepGumbel,
                "indep_reverse_gumbel": IndepReverseGumbel,
                "indep_reverse_exp": IndepReverseExp,
            }[self.family]
            spec = cls(alpha, beta)
        elif self.family == "indep_log_gamma":
            alpha = np.exp(parts["alpha"])
            if alpha.size == 1:
                alpha = np.repeat(alpha, d)
            spec = IndepLogGamma(alpha)
        elif self.family == "gaussian":
            beta = np.zeros(d)
            if "beta" in parts:
                beta[1:] = parts["beta"]
            R = corr_from_angles_z(parts["corr"], d)
            spec = Gaussian(beta, R)
        else:
            lam = np.concatenate([[1.0], np.exp(parts["lam"])])
            spec = StructuredExp(lam)
        margins = self._margins(parts)
        return GpModel(spec, margins, self.form)

    def _margins(self, parts) -> MarginalParams:
        d = self.d
        mo = self.margin_opts
        sig_opt = mo.get("sigma", "free")
        if isinstance(sig_opt, tuple) and sig_opt[0] == "fixed":
            sigma = np.broadcast_to(np.asarray(sig_opt[1], dtype=float), (d,))
        elif sig_opt == "shared":
            sigma = np.repeat(np.exp(parts["sigma"]), d)
        else:
            sigma = np.exp(parts["sigma"])
        gam_opt = mo.get("gamma", "free")
        if isinstance(gam_opt, tuple) and gam_opt[0] == "fixed":
            gamma = np.broadcast_to(np.asarray(gam_opt[1], dtype=float), (d,))
        elif gam_opt == "shared":
            gamma = np.repeat(parts["gamma"], d)
        elif gam_opt == "positive":
            gamma = np.repeat(np.exp(parts["gamma"]), d)
        else:
            gamma = parts["gamma"]
        return MarginalParams(sigma, gamma)

    def natural(self, z) -> np.ndarray:
        """Flat natural-scale parameter vector matching parameter_names()."""
        parts = self._split(z)
        out = []
        for name, n in self.blocks():
            vals = parts[name]
            if name in ("alpha", "sigma", "lam"):
                out.append(np.exp(vals))
            elif name == "gamma" and self.margin_opts.get("gamma") == "positive":
                out.append(np.exp(vals))
            elif name == "corr":
                R = corr_from_angles_z(vals, self.d)
                out.append(R[np.triu_indices(self.d, k=1)])
            else:
                out.append(np.asarray(vals, dtype=float))
        return np.concatenate(out) if out else np.empty(0)

    # -- initialization ------------------------------------------------------

    def init_z(self, data: ExceedanceSet) -> np.ndarray:
        d = self.d
        x = data.rows
        parts = []
        dep = self.dep_opts
        if self.family in ("indep_gumbel", "indep_reverse_gumbel"):
            n_a = 1 if dep.get("alpha", "free") == "common" else d
            parts.append(np.full(n_a, np.log(1.5)))
            if dep.get("beta", "free") == "free" and d > 1:
                parts.append(np.zeros(d - 1))
        elif self.family == "indep_reverse_exp":
            n_a = 1 if dep.get("alpha", "free") == "common" else d
            parts.append(np.zeros(n_a))
            if dep.get("beta", "free") == "free" and d > 1:
                parts.append(np.zeros(d - 1))
        elif self.family == "indep_log_gamma":
            n_a = 1 if dep.get("alpha", "free") == "common" else d
            parts.append(np.full(n_a, np.log(1.5)))
        elif self.family == "gaussian":
            if dep.get("beta", "free") == "free" and d > 1:
                parts.append(np.zeros(d - 1))
            R = np.corrcoef(x, rowvar=False) if x.shape[0] > d + 2 else np.eye(d)
            R = 0.7 * np.nan_to_num(R, nan=0.0) + 0.3 * np.eye(d)
            np.fill_diagonal(R, 1.0)
            try:
                parts.append(angles_z_from_corr(R))
            except np.linalg.LinAlgError:
                parts.append(np.zeros(d * (d - 1) // 2))
        else:
            parts.append(np.zeros(d - 1))
        mo = self.margin_opts
        sig_opt = mo.get("sigma", "free")
        gam_opt = mo.get("gamma", "free")
        sig0, gam0 = [], []
        if sig_opt in ("free", "shared") or gam_opt in ("free", "shared", "positive"):
            for j in range(d):
                pos = x[:, j][x[:, j] > 0]
                if pos.size >= 5:
                    try:
                        f = gp_fit(pos)
                        sig0.append(max(f.sigma, 1e-8))
                        gam0.append(np.clip(f.gamma, -0.4, 1.5))
                        continue
                    except Exception:
                        pass
                sig0.append(max(np.mean(np.abs(x[:, j])), 1e-8))
                gam0.append(0.1)
        if sig_opt == "free":
            parts.append(np.log(sig0))
        elif sig_opt == "shared":
            parts.append(np.array([np.log(np.mean(sig0))]))
        if gam_opt == "free":
            parts.append(np.array(gam0))
        elif gam_opt == "shared":
            parts.append(np.array([np.mean(gam0)]))
        elif gam_opt == "positive":
            parts.append(np.array([np.log(max(np.mean(gam0), 0.05))]))
        return np.concatenate(parts) if parts else np.empty(0)


# ---------------------------------------------------------------------------
# fit result


@dataclass
class FitResult:
    template: ModelTemplate
    z: np.ndarray
    loglik: float
    params: dict
    se: dict
    cov: np.ndarray | None
    aic: float
    n_free: int
    n_obs: int
    convergence: dict
    model: GpModel = field(repr=False, default=None)

    @property
    def parameter_names(self):
        return self.template.parameter_names()

    def natural_vector(self) -> np.ndarray:
        return self.template.natural(self.z)

    def to_dict(self) -> dict:
        return {
            "family": self.template.family,
            "form": self.template.form,
            "d": self.template.d,
            "dep": dict(self.template.dep),
            "margins": {k: list(v) if isinstance(v, tuple) else v
                         for k, v in self.template.margin_opts.items()},
            "z": [float(v) for v in self.z],
            "loglik": self.loglik,
            "aic": self.aic,
            "n_free": self.n_free,
            "n_obs": self.n_obs,
            "params": {k: (list(v) if np.ndim(v) else float(v)) for k, v in self.params.items()},
            "se": {k: (list(v) if np.ndim(v) else float(v)) for k, v in self.se.items()},
            "cov": None if self.cov is None else [list(r) for r in self.cov],
            "convergence": self.convergence,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    @staticmethod
    def from_dict(obj: dict) -> "FitResult":
        margins = tuple(
            (k, tuple(v) if isinstance(v, list) else v) for k, v in obj["margins"].items()
        )
        template = ModelTemplate(
            obj["family"], int(obj["d"]), obj["form"],
            dep=tuple(obj["dep"].items()), margins=margins,
        )
        z = np.asarray(obj["z"], dtype=float)
        cov = None if obj.get("cov") is None else np.asarray(obj["cov"], dtype=float)
        return FitResult(
            template=template,
            z=z,
            loglik=float(obj["loglik"]),
            params=dict(obj["params"]),
            se=dict(obj.get("se", {})),
            cov=cov,
            aic=float(obj["aic"]),
            n_free=int(obj["n_free"]),
            n_obs=int(obj["n_obs"]),
            convergence=dict(obj.get("convergence", {})),
            model=template.model(z),
        )


def _named_params(template: ModelTemplate, z) -> dict:
    names = template.parameter_names()
    vals = template.natural(z)
    out: dict = {}
    for name, val in zip(names, vals):
        out[name] = float(val)
    return out


# ---------------------------------------------------------------------------
# maximum likelihood


def _numeric_hessian(f, z, rel_step=2e-3):
    k = z.size
    H = np.empty((k, k))
    steps = rel_step * np.maximum(1.0, np.abs(z))
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


def _natural_jacobian(template: ModelTemplate, z, rel_step=1e-6):
    base = template.natural(z)
    k = z.size
    J = np.empty((base.size, k))
    for i in range(k):
        h = rel_step * max(1.0, abs(z[i]))
        zp = z.copy(); zp[i] += h
        zm = z.copy(); zm[i] -= h
        J[:, i] = (template.natural(zp) - template.natural(zm)) / (2 * h)
    return J


def fit_mle(
    template: ModelTemplate,
    data: ExceedanceSet,
    init: np.ndarray | dict | None = None,
    restarts: int = 5,
    rng: np.random.Generator | None = None,
    search_tol: float = 1e-7,
    final_tol: float = 1e-9,
    compute_cov: bool = True,
    max_iter: int | None = None,
) -> FitResult:
    """Maximize the censored log-likelihood for a model template.

    ``init`` may be an internal vector or omitted for data-driven
    defaults; ``restarts`` jittered re-starts guard against simplex
    stagnation.  Quadrature runs at ``search_tol`` during the search and
    the optimum is re-evaluated at ``final_tol``.
    """
    if template.d != data.dim:
        raise InvalidParameterError("template and data dimension differ")
    rng = rng if rng is not None else np.random.default_rng(0)
    z0 = np.asarray(init, dtype=float) if init is not None else template.init_z(data)

    fail_count = [0]
    BIG = 1e10  # finite penalty keeps the simplex arithmetic clean

    def nll(zv, tol=search_tol):
        try:
            model = template.model(zv)
        except (InvalidParameterError, np.linalg.LinAlgError, FloatingPointError):
            return BIG
        try:
            val = negative_log_likelihood(model, data, rel_tol=tol)
        except NumericalError:
            fail_count[0] += 1
            return BIG
        return val if np.isfinite(val) else BIG

    f0 = nll(z0)
    tries = 0
    while f0 >= BIG and tries < 50:
        z0 = z0 + rng.normal(scale=0.25, size=z0.size)
        f0 = nll(z0)
        tries += 1
    if f0 >= BIG:
        raise FitError("no admissible starting point found (NLL infinite everywhere tried)")

    n = template.n_free
    budget = max_iter if max_iter is not None else 400 * max(n, 1)
    fatol = 1e-8 * max(1.0, abs(f0))
    best_z, best_f = z0, f0
    evals = 0
    stagnated = False
    for attempt in range(restarts + 1):
        start = best_z if attempt == 0 else best_z + rng.normal(scale=0.3, size=n)
        res = optimize.minimize(
            nll,
            start,
            method="Nelder-Mead",
            options={
                "xatol": 2e-5,
                "fatol": fatol,
                "maxiter": budget,
                "maxfev": 2 * budget,
                "adaptive": n > 4,
            },
        )
        evals += res.nfev
        if res.fun < best_f - 1e-12:
            best_z, best_f = res.x, res.fun
        if attempt == 0 and not res.success and res.fun >= f0:
            stagnated = True

    final_nll = nll(best_z, tol=final_tol)
    if final_nll >= BIG:
        raise FitError("optimum re-evaluation failed at the final tolerance")
    model = template.model(best_z)

    cov_nat = None
    se: dict = {}
    hess_ok = False
    if compute_cov:
        H = _numeric_hessian(lambda zz: nll(zz, tol=search_tol), best_z)
        try:
            cov_z = np.linalg.inv(H)
            eig = np.linalg.eigvalsh((cov_z + cov_z.T) / 2)
            hess_ok = bool(np.all(np.isfinite(cov_z)) and eig.min() > -1e-8 * max(eig.max(), 1.0))
        except np.linalg.LinAlgError:
            cov_z = None
        if cov_z is not None and hess_ok:
            J = _natural_jacobian(template, best_z)
            cov_nat = J @ cov_z @ J.T
            ses = np.sqrt(np.maximum(np.diag(cov_nat), 0.0))
            se = dict(zip(template.parameter_names(), ses.tolist()))

    params = _named_params(template, best_z)
    convergence = {
        "nfev": int(evals),
        "restarts": int(restarts),
        "stagnated": bool(stagnated),
        "quadrature_failures": int(fail_count[0]),
        "hessian_ok": bool(hess_ok),
        "search_tol": search_tol,
        "final_tol": final_tol,
    }
    loglik = -final_nll
    return FitResult(
        template=template,
        z=np.asarray(best_z, dtype=float),
        loglik=float(loglik),
        params=params,
        se=se,
        cov=cov_nat,
        aic=float(2.0 * final_nll + 2.0 * n),
        n_free=n,
        n_obs=data.n,
        convergence=convergence,
        model=model,
    )


def standard_errors(fit: FitResult) -> dict:
    """Per-parameter standard errors (delta method through the internal
    transform); empty when the Hessian was not invertible."""
    if not fit.convergence.get("hessian_ok", False):
        return {}
    return dict(fit.se)


@dataclass(frozen=True)
class LrTest:
    statistic: float
    dof: int
    p_value: float


def lr_test(nested: FitResult, full: FitResult) -> LrTest:
    """Likelihood-ratio test of a nested model against a richer one."""
    dof = full.n_free - nested.n_free
    if dof <= 0:
        raise InvalidParameterError("nested model must have fewer free parameters")
    if nested.n_obs != full.n_obs:
        raise InvalidParameterError("fits compare different data")
    stat = 2.0 * (full.loglik - nested.loglik)
    if stat < -1e-6 * max(1.0, abs(full.loglik)):
        raise FitError(
            f"likelihood ratio statistic is negative ({stat:.3g}); "
            "the full-model optimizer likely failed"
        )
    stat = max(stat, 0.0)
    p = float(stats.chi2.sf(stat, dof)) if stat > 0 else 1.0
    return LrTest(float(stat), int(dof), p)


# ---------------------------------------------------------------------------
# model-selection pipeline


class PipelineError(FitError):
    """A pipeline stage failed; carries the decision trace so far."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


#: the five candidate dependence structures fitted to standardized data by
#: default; log-gamma and reverse-Gumbel variants can be requested explicitly.
DEFAULT_FAMILIES = (
    ("indep_gumbel", "T"),
    ("indep_gumbel", "U"),
    ("indep_reverse_exp", "T"),
    ("indep_reverse_exp", "U"),
    ("gaussian", "T"),
)

_STD_MARGINS = (("sigma", ("fixed", 1.0)), ("gamma", ("fixed", 0.0)))


def _richest_dep(family: str, d: int) -> tuple:
    if family in ("indep_gumbel", "indep_reverse_gumbel", "indep_reverse_exp"):
        return (("alpha", "free"), ("beta", "free" if d > 1 else "zero"))
    if family == "indep_log_gamma":
        return (("alpha", "free"),)
    if family == "gaussian":
        return (("beta", "free" if d > 1 else "zero"),)
    if family == "structured_exp":
        return ()
    raise InvalidParameterError(f"unknown family {family}")


def _ladder(family: str, d: int):
    """Simplification steps: list of (label, dep-options), richest first."""
    if family in ("indep_gumbel", "indep_reverse_gumbel", "indep_reverse_exp") and d > 1:
        m1 = (("alpha", "free"), ("beta", "free"))
        m2 = (("alpha", "free"), ("beta", "zero"))
        m3 = (("alpha", "common"), ("beta", "free"))
        m4 = (("alpha", "common"), ("beta", "zero"))
        return {"M1": m1, "M2": m2, "M3": m3, "M4": m4}, [["M1", "M2", "M4"], ["M1", "M3", "M4"]]
    if family == "indep_log_gamma" and d > 1:
        return (
            {"M1": (("alpha", "free"),), "M2": (("alpha", "common"),)},
            [["M1", "M2"]],
        )
    if family == "gaussian" and d > 1:
        return (
            {"M1": (("beta", "free"),), "M2": (("beta", "zero"),)},
            [["M1", "M2"]],
        )
    base = _richest_dep(family, d)
    return {"M1": base}, [["M1"]]


def _fit_quietly(template, data, **kw):
    try:
        return fit_mle(template, data, **kw), None
    except (FitError, NumericalError, InvalidParameterError) as exc:
        return None, str(exc)


def model_selection_pipeline(
    raw,
    families=DEFAULT_FAMILIES,
    q_grid=None,
    censor_floor=0.0,
    B: int = 500,
    rng: np.random.Generator | None = None,
    significance: float = 0.05,
    q_fixed: float | None = None,
    restarts: int = 2,
):
    """Threshold selection, family choice, simplification and joint fitting.

    Returns a dict with the decision ``trace`` (one entry per stage), the
    selected family, the final :class:`FitResult` and the thresholds; any
    stage failure raises :class:`PipelineError` carrying the trace so far.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    n, d = raw.shape
    trace: list[dict] = []

    from .diagnostics import threshold_select
    from .ingest import exceedances, rank_standardize
    from .univariate import gp_fit

    # (i) standardize margins to unit exponential by ranks
    data_e = rank_standardize(raw)
    trace.append({"stage": "standardize", "n": int(n), "d": int(d)})

    # (ii) dependence threshold from the flatness of the chi curve
    if q_grid is None:
        q_grid = np.round(np.arange(0.70, 0.96, 0.01), 3)
    if q_fixed is not None:
        q_star = float(q_fixed)
        trace.append({"stage": "threshold", "q": q_star, "source": "fixed"})
    else:
        q_star, curve = threshold_select(raw, q_grid, B=B, rng=rng)
        trace.append({
            "stage": "threshold",
            "q": q_star,
            "source": "chi-stability",
            "curve": curve.to_rows(),
        })
        if q_star is None:
            raise PipelineError("no stable threshold found on the grid", trace)
    u = np.quantile(raw, q_star, axis=0)
    u_e = -math.log1p(-q_star)

    if d == 1:
        exc = raw[raw[:, 0] > u[0], 0] - u[0]
        uni = gp_fit(exc)
        trace.append({
            "stage": "univariate",
            "sigma": uni.sigma, "gamma": uni.gamma,
            "se": [uni.se_sigma, uni.se_gamma], "loglik": uni.loglik,
            "n_exceedances": int(uni.n),
        })
        return {"trace": trace, "q": q_star, "u": u.tolist(), "univariate": uni,
                "family": None, "final": None}

    # (iii) richest standard-form model per family on standardized excesses
    std_data = exceedances(data_e, np.full(d, u_e), censor_floor)
    sweep = []
    for fam, form in families:
        tmpl = ModelTemplate(fam, d, form, dep=_richest_dep(fam, d), margins=_STD_MARGINS)
        init = _warm_start(fam, form, d, std_data, rng)
        res, err = _fit_quietly(tmpl, std_data, restarts=restarts, rng=rng,
                                compute_cov=False, init=init)
        sweep.append({
            "family": fam, "form": form,
            "aic": None if res is None else res.aic,
            "loglik": None if res is None else res.loglik,
            "n_free": tmpl.n_free,
            "error": err,
        })
    trace.append({"stage": "family-sweep", "n_exceedances": int(std_data.n),
                  "candidates": sweep})
    fitted = [(c, i) for i, c in enumerate(sweep) if c["aic"] is not None]
    if not fitted:
        raise PipelineError("every candidate family failed to fit", trace)

    # (iv) best family by AIC
    best = min(fitted, key=lambda t: t[0]["aic"])[0]
    family, form = best["family"], best["form"]
    trace.append({"stage": "family-choice", "family": family, "form": form,
                  "aic": best["aic"]})

    # (v) likelihood-ratio simplification ladder within the family
    models, sequences = _ladder(family, d)
    fits: dict[str, FitResult] = {}

    def get_fit(label):
        if label not in fits:
            tmpl = ModelTemplate(family, d, form, dep=models[label], margins=_STD_MARGINS)
            init = _ladder_init(family, d, models[label], fits)
            res, err = _fit_quietly(tmpl, std_data, restarts=restarts, rng=rng,
                                    compute_cov=False, init=init)
            if res is None:
                raise PipelineError(f"ladder fit {label} failed: {err}", trace)
            fits[label] = res
        return fits[label]

    endpoints = []
    ladder_log = []
    for seq in sequences:
        current = seq[0]
        for nxt in seq[1:]:
            test = lr_test(get_fit(nxt), get_fit(current))
            accept = test.p_value >= significance
            ladder_log.append({
                "sequence": seq, "from": current, "to": nxt,
                "statistic": test.statistic, "dof": test.dof,
                "p_value": test.p_value, "adopted": bool(accept),
            })
            if accept:
                current = nxt
            else:
                break
        endpoints.append(current)
    agreed = len(set(endpoints)) == 1
    if agreed:
        selected = endpoints[0]
    else:
        selected = min(endpoints, key=lambda lb: get_fit(lb).aic)
    trace.append({
        "stage": "simplification",
        "tests": ladder_log,
        "endpoints": endpoints,
        "agreement": bool(agreed),
        "selected": selected,
    })

    # (vi) joint fit of margins and selected dependence on the raw scale
    raw_data = exceedances(raw, u, censor_floor)
    tmpl_free = ModelTemplate(family, d, form, dep=models[selected],
                              margins=(("sigma", "free"), ("gamma", "free")))
    joint, err = _fit_quietly(tmpl_free, raw_data, restarts=restarts, rng=rng)
    if joint is None:
        raise PipelineError(f"joint fit failed: {err}", trace)
    trace.append({"stage": "joint-fit", "n_exceedances": int(raw_data.n),
                  "loglik": joint.loglik, "aic": joint.aic,
                  "params": joint.params, "se": joint.se})

    # (vii) marginal simplifications: shared shape, then shared scale
    final = joint
    margin_log = []
    tmpl_shg = ModelTemplate(family, d, form, dep=models[selected],
                             margins=(("sigma", "free"), ("gamma", "shared")))
    shg, err = _fit_quietly(tmpl_shg, raw_data, restarts=restarts, rng=rng)
    if shg is not None:
        test = lr_test(shg, joint)
        accept = test.p_value >= significance
        margin_log.append({"hypothesis": "shared-gamma", "statistic": test.statistic,
                           "dof": test.dof, "p_value": test.p_value,
                           "adopted": bool(accept)})
        if accept:
            final = shg
            tmpl_shs = ModelTemplate(family, d, form, dep=models[selected],
                                     margins=(("sigma", "shared"), ("gamma", "shared")))
            shs, err2 = _fit_quietly(tmpl_shs, raw_data, restarts=restarts, rng=rng)
            if shs is not None:
                test2 = lr_test(shs, shg)
                accept2 = test2.p_value >= significance
                margin_log.append({"hypothesis": "shared-sigma",
                                   "statistic": test2.statistic, "dof": test2.dof,
                                   "p_value": test2.p_value, "adopted": bool(accept2)})
                if accept2:
                    final = shs
    trace.append({"stage": "margin-simplification", "tests": margin_log,
                  "final_params": final.params, "final_se": final.se,
                  "final_loglik": final.loglik})

    return {
        "trace": trace,
        "q": q_star,
        "u": u.tolist(),
        "family": family,
        "form": form,
        "dependence": selected,
        "final": final,
        "std_fits": fits,
        "joint": joint,
    }


def _warm_start(family, form, d, data, rng):
    """Cheap equal-rate pre-fit used to seed the richest location-family fits."""
    if family not in ("indep_gumbel", "indep_reverse_gumbel") or d < 2:
        return None
    pre = ModelTemplate(family, d, form,
                        dep=(("alpha", "common"), ("beta", "zero")),
                        margins=_STD_MARGINS)
    res, err = _fit_quietly(pre, data, restarts=0, rng=rng, compute_cov=False)
    if res is None:
        return None
    return np.concatenate([np.repeat(res.z[0], d), np.zeros(d - 1)])


def _ladder_init(family, d, dep, fits):
    """Seed a simplified ladder fit from the richest fitted model."""
    rich = fits.get("M1")
    if rich is None or family not in ("indep_gumbel", "indep_reverse_gumbel",
                                      "indep_reverse_exp") or d < 2:
        return None
    dep = dict(dep)
    z = rich.z
    log_alpha = z[:d]
    beta = z[d : 2 * d - 1] if z.size >= 2 * d - 1 else np.zeros(d - 1)
    parts = []
    parts.append(np.array([log_alpha.mean()]) if dep.get("alpha") == "common" else log_alpha)
    if dep.get("beta", "free") == "free":
        parts.append(beta)
    return np.concatenate(parts)

"""One-dimensional quadrature helpers for generator-form integrals.

All GP density integrals in this package are taken in the log-intensity
variable ``s = log t``, where the integrands are smooth, unimodal and
decay at least exponentially on both sides.  Two evaluation paths are
provided:

* a scalar adaptive path backed by QUADPACK (:func:`scipy.integrate.quad`,
  adaptive Gauss-Kronrod) over a bracket found by expanding away from the
  peak until the integrand is negligible relative to its maximum;
* a vectorized fixed-rule path used inside likelihood loops, applying
  Gauss-Legendre rules of increasing order on per-row brackets with a
  doubling error estimate; rows failing the tolerance fall back to the
  scalar path.

Both paths work in log space: they return ``log`` of the integral, with
``-inf`` for an identically negligible integrand.

The vectorized entry point takes an *integrand factory*: a callable
``log_f(S, idx)`` evaluating the log-integrand at node matrix ``S`` of
shape ``(len(idx), m)`` for the data rows selected by ``idx``; this lets
the fallback path re-evaluate single rows adaptively.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import integrate

from .core import NumericalError

# integrand values this far (in log) below the peak are treated as zero
_LOG_DROP = 46.0  # exp(-46) ~ 1e-20


@lru_cache(maxsize=32)
def _gl_nodes(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _expand_bracket_scalar(log_f, s_peak, step=1.0, max_span=1e7):
    """Expand left/right from the peak until log_f drops _LOG_DROP below it."""
    f_peak = log_f(s_peak)
    if not np.isfinite(f_peak):
        grid = np.linspace(-60, 60, 241)
        vals = np.array([log_f(s) for s in grid])
        finite = np.isfinite(vals)
        if not finite.any():
            return None
        s_peak = grid[int(np.argmax(np.where(finite, vals, -np.inf)))]
        f_peak = log_f(s_peak)
    edges = []
    for direction in (-1.0, 1.0):
        edge, h = s_peak, step
        prev = f_peak
        while True:
            cand = edge + direction * h
            val = log_f(cand)
            if (val > f_peak - _LOG_DROP) or (np.isfinite(val) and val > prev):
                if val > f_peak:
                    f_peak = val
                edge, prev = cand, val
                h *= 2.0
                if abs(edge - s_peak) > max_span:
                    break
            else:
                break
        edges.append(edge + direction * h)
    return edges[0], edges[1], f_peak


def log_quad_scalar(log_f, s_peak=0.0, rel_tol=1e-10):
    """Adaptive quadrature of exp(log_f) over the real line.

    Returns ``(log_integral, rel_err_estimate)``.
    """
    br = _expand_bracket_scalar(log_f, s_peak)
    if br is None:
        return -np.inf, 0.0
    lo, hi, shift = br

    def f(s):
        v = log_f(s) - shift
        return np.exp(v) if v > -700 else 0.0

    val, err = integrate.quad(f, lo, hi, epsabs=1e-300, epsrel=rel_tol, limit=200)
    if val <= 0.0:
        return -np.inf, 0.0
    rel = err / val
    if rel > max(rel_tol * 100, 1e-6):
        raise NumericalError(
            f"quadrature failed to converge: relative error estimate {rel:.2e}"
        )
    return shift + np.log(val), rel


def _expand_edge(log_f, idx, edge, prev, shift, peak, direction, step0):
    """Doubling expansion for rows whose integrand has not yet dropped off."""
    n = edge.size
    step = np.full(n, step0)
    active = np.ones(n, dtype=bool)
    for _ in range(60):
        if not active.any():
            break
        probe = edge + direction * step
        sub = np.nonzero(active)[0]
        pv = log_f(probe[sub, None], idx[sub])[:, 0]
        pv = np.where(np.isfinite(pv), pv, -np.inf)
        grow = (pv > shift[sub] - _LOG_DROP) | (pv > prev[sub])
        upd = sub[grow]
        edge[upd] = probe[upd]
        prev[upd] = pv[grow]
        better = pv[grow] > shift[upd]
        peak[upd[better]] = probe[upd[better]]
        shift[upd] = np.maximum(shift[upd], pv[grow])
        step[upd] *= 2.0
        nxt = np.zeros(n, dtype=bool)
        nxt[upd] = True
        active = nxt
    edge += direction * step


def _batch_brackets(log_f, idx, coarse=None):
    """Per-row (bracket, peak, peak value) for the rows selected by ``idx``.

    The integrands are unimodal and log-concave, so on a coarse grid the
    crossings of ``peak - _LOG_DROP`` bracket the mass; only rows whose
    integrand is still large at the grid ends need doubling expansion.
    """
    n = idx.size
    if coarse is None:
        coarse = np.linspace(-40.0, 40.0, 81)
    m = coarse.size
    S = np.broadcast_to(coarse, (n, m)).copy()
    vals = log_f(S, idx)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    shift = vals.max(axis=1)
    alive = shift > -np.inf
    pos = np.argmax(vals, axis=1)
    peak = coarse[pos].astype(float)
    cols = np.arange(m)
    small = vals < (shift[:, None] - _LOG_DROP)

    # last grid point below threshold to the left of the peak
    left_mask = small & (cols < pos[:, None])
    lo_idx = np.where(left_mask.any(axis=1), m - 1 - np.argmax(left_mask[:, ::-1], axis=1), 0)
    lo = coarse[lo_idx].astype(float)
    need_left = alive & ~left_mask.any(axis=1)
    # first grid point below threshold to the right of the peak
    right_mask = small & (cols > pos[:, None])
    hi_idx = np.where(right_mask.any(axis=1), np.argmax(right_mask, axis=1), m - 1)
    hi = coarse[hi_idx].astype(float)
    need_right = alive & ~right_mask.any(axis=1)

    step0 = coarse[1] - coarse[0]
    for need, edge_arr, col, direction in (
        (need_left, lo, 0, -1.0),
        (need_right, hi, m - 1, 1.0),
    ):
        if need.any():
            sub = np.nonzero(need)[0]
            e = edge_arr[sub].copy()
            pk = peak[sub].copy()
            sh = shift[sub].copy()
            _expand_edge(log_f, idx[sub], e, vals[sub, col].copy(), sh, pk,
                         direction, step0)
            edge_arr[sub] = e
            peak[sub] = pk
            shift[sub] = sh
    peak = np.clip(peak, lo, hi)
    return lo, hi, peak, shift


def _panel_sums(log_f, idx, lo, peak, hi, shift, order):
    """Gauss-Legendre over the two peak-split pieces in one fused call."""
    x, w = _gl_nodes(order)
    midL, halfL = 0.5 * (lo + peak), 0.5 * (peak - lo)
    midR, halfR = 0.5 * (peak + hi), 0.5 * (hi - peak)
    S = np.concatenate(
        [midL[:, None] + halfL[:, None] * x, midR[:, None] + halfR[:, None] * x],
        axis=1,
    )
    V = log_f(S, idx) - shift[:, None]
    V = np.where(np.isfinite(V), V, -np.inf)
    E = np.exp(np.maximum(V, -745.0))
    return (E[:, : x.size] * w).sum(axis=1) * halfL + (E[:, x.size :] * w).sum(axis=1) * halfR


def log_quad_rows(log_f, idx, rel_tol=1e-9, orders=None, scalar_fallback=True):
    """Vectorized quadrature of ``exp(log_f)`` for a batch of data rows.

    Each row's bracket is split at the integrand peak; the two
    monotone-decay pieces are integrated by Gauss-Legendre at two orders,
    whose agreement provides the error estimate.  Rows missing ``rel_tol``
    are redone with the scalar adaptive rule.
    """
    idx = np.asarray(idx)
    n = idx.size
    if n == 0:
        return np.empty(0)
    if orders is None:
        orders = (48, 96) if rel_tol >= 1e-8 else (64, 128)
    lo, hi, peak, shift = _batch_brackets(log_f, idx)
    alive = shift > -np.inf
    sh = np.where(alive, shift, 0.0)
    approx = [_panel_sums(log_f, idx, lo, peak, hi, sh, order) for order in orders]
    a, b = approx[-2], approx[-1]
    rel = np.abs(a - b) / np.maximum(np.abs(b), 1e-300)
    ok = (rel < rel_tol) | ~alive | (b <= 0)
    with np.errstate(divide="ignore"):
        logv = np.where((b > 0) & alive, shift + np.log(np.maximum(b, 1e-300)), -np.inf)
    if not ok.all():
        if not scalar_fallback:
            raise NumericalError(
                f"{int((~ok).sum())} rows failed batch quadrature at rel_tol={rel_tol:g}"
            )
        for i in np.nonzero(~ok)[0]:
            def scalar_log_f(s, i=i):
                return float(log_f(np.array([[s]]), idx[i : i + 1])[0, 0])

            logv[i], _ = log_quad_scalar(scalar_log_f, s_peak=peak[i], rel_tol=rel_tol)
    return logv

"""Dataset construction: returns, rainfall clusters, exceedances, ranks.

CSV inputs require a header row, ISO-8601 dates in the first column and
plain decimal-point numbers; missing or malformed values are rejected
with row-numbered messages (header is row 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .core import ExceedanceSet, InvalidParameterError


class DataError(Exception):
    """Malformed input data."""


@dataclass(frozen=True)
class Series:
    """A dated series; prices must be positive, rainfall non-negative."""

    dates: np.ndarray
    values: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if np.any(np.diff(self.dates.astype("datetime64[s]").astype(np.int64)) <= 0):
            raise DataError("timestamps must be strictly increasing")


def read_series_csv(path) -> Series:
    """Read a ``date,value[,value...]`` CSV with a header row."""
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"cannot parse CSV {path}: {exc}") from exc
    if df.shape[1] < 2:
        raise DataError(f"{path}: need a date column plus at least one value column")
    bad = df.index[df.isna().any(axis=1)]
    if len(bad):
        raise DataError(f"{path}: missing value in data row(s) {[int(b) + 2 for b in bad[:10]]}")
    try:
        dates = pd.to_datetime(df.iloc[:, 0], format="ISO8601").to_numpy()
    except Exception:
        try:
            dates = pd.to_datetime(df.iloc[:, 0]).to_numpy()
        except Exception as exc:
            raise DataError(f"{path}: unparseable dates: {exc}") from exc
    vals = df.iloc[:, 1:]
    for col in vals.columns:
        if not np.issubdtype(vals[col].dtype, np.number):
            rows = vals.index[pd.to_numeric(vals[col], errors="coerce").isna()]
            raise DataError(
                f"{path}: non-numeric value in column {col!r}, row(s) {[int(r) + 2 for r in rows[:10]]}"
            )
    return Series(dates, vals.to_numpy(dtype=float), tuple(str(c) for c in vals.columns))


def negative_returns(prices: Series) -> Series:
    """Weekly/daily negative relative returns 1 - Z_t / Z_{t-1} per asset."""
    z = prices.values
    if np.any(z <= 0):
        rows = np.nonzero((z <= 0).any(axis=1))[0]
        raise DataError(f"non-positive price in data row(s) {[int(r) + 2 for r in rows[:10]]}")
    rets = 1.0 - z[1:] / z[:-1]
    return Series(prices.dates[1:], rets, prices.labels)


def _runs_of_positive(vals: np.ndarray):
    """Maximal runs of strictly positive entries as (start, stop) pairs."""
    runs = []
    start = None
    for i, v in enumerate(vals):
        if v > 0 and start is None:
            start = i
        elif v <= 0 and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(vals)))
    return runs


def _best_run_sum(vals: np.ndarray, length: int) -> float | None:
    """Largest sum of ``length`` consecutive strictly positive values."""
    best = None
    for a, b in _runs_of_positive(vals):
        if b - a < length:
            continue
        window = np.convolve(vals[a:b], np.ones(length), mode="valid")
        m = float(window.max())
        if best is None or m > best:
            best = m
    return best


def rainfall_clusters(rain: Series, u: float, halfwidth: int = 5) -> np.ndarray:
    """Extract (1, 2, 3)-day extreme precipitation triples around peaks.

    Scans for the first three-day sum above ``u``, takes the maximum of
    those three days as the cluster peak (earliest day on ties, which the
    procedure leaves open), forms the window of ``halfwidth`` days on each
    side (truncated at the series ends), and records the largest value,
    largest two-consecutive-wet-day sum and largest three-consecutive-wet-day
    sum in the window.  When a window has no wet run of the required
    length, the sums fall back to the best shorter run so the triple stays
    ordered.  Scanning resumes after the window.
    """
    if u <= 0:
        raise InvalidParameterError("u must be positive")
    p = np.asarray(rain.values, dtype=float).ravel()
    if np.any(p < 0):
        raise DataError("rainfall must be non-negative")
    n = p.size
    out = []
    i = 0
    while i + 2 < n:
        if p[i] + p[i + 1] + p[i + 2] > u:
            peak = i + int(np.argmax(p[i : i + 3]))
            lo = max(0, peak - halfwidth)
            hi = min(n, peak + halfwidth + 1)
            window = p[lo:hi]
            y1 = float(window.max())
            best2 = _best_run_sum(window, 2)
            y2 = best2 if best2 is not None else y1
            best3 = _best_run_sum(window, 3)
            if best3 is not None:
                y3 = best3
            else:  # no wet 3-run: best sum over shorter runs, single max included
                y3 = max(y1, best2) if best2 is not None else y1
            out.append((y1, y2, y3))
            i = hi
        else:
            i += 1
    return np.asarray(out, dtype=float).reshape(-1, 3)


def exceedances(data, u, v=0.0, component: int | None = None) -> ExceedanceSet:
    """Rows not componentwise below ``u``, shifted by ``u``.

    ``component`` restricts the filter to a single margin (used when a
    study keys exceedances to one component only).
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    u = np.broadcast_to(np.asarray(u, dtype=float), (data.shape[1],))
    if component is None:
        keep = (data > u).any(axis=1)
    else:
        keep = data[:, component] > u[component]
    return ExceedanceSet(data[keep] - u, u, v)


def rank_standardize(data) -> np.ndarray:
    """Map each margin to the standard exponential scale by ranks."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if n < 2:
        raise InvalidParameterError("need at least two rows")
    ranks = rankdata(data, method="average", axis=0)
    return -np.log1p(-ranks / (n + 1.0))


def write_matrix_csv(path, matrix, labels=None, float_format="%.12g"):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    labels = labels or [f"c{j + 1}" for j in range(matrix.shape[1])]
    df = pd.DataFrame(matrix, columns=list(labels))
    df.to_csv(path, index=False, float_format=float_format)


def read_matrix_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    df = pd.read_csv(path)
    bad = df.index[df.isna().any(axis=1)]
    if len(bad):
        raise DataError(f"{path}: missing value in data row(s) {[int(b) + 2 for b in bad[:10]]}")
    return df.to_numpy(dtype=float), tuple(str(c) for c in df.columns)

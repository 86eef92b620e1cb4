"""Seasonal-trend decomposition of hourly station series.

Wraps the Loess-based STL of statsmodels with two post-conditions the rest
of the pipeline relies on: the additive reconstruction is exact, and the
seasonal component is re-centred so that every complete cycle has
(numerically) zero mean, the removed per-cycle means being folded into the
trend.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import periodogram
from statsmodels.tsa.seasonal import STL

from .errors import InsufficientDataError, MissingDataError

DEFAULT_PERIOD = 24
DEFAULT_SEASONAL_WINDOW = 25
DEFAULT_TREND_WINDOW = 49


@dataclass(frozen=True)
class Decomposition:
    trend: np.ndarray
    seasonal: np.ndarray
    residual: np.ndarray
    period: int


def stl_decompose(series, period: int = DEFAULT_PERIOD,
                  seasonal_window: int = DEFAULT_SEASONAL_WINDOW,
                  trend_window: int = DEFAULT_TREND_WINDOW,
                  lowpass_window: int | None = None) -> Decomposition:
    """Additive STL decomposition of an hourly series.

    The residual is defined as series - trend - seasonal, so the
    reconstruction is exact by construction. Windows must be odd.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 2 * period:
        raise InsufficientDataError(
            f"series length {len(x)} < 2 x period {period}")
    if np.isnan(x).any():
        raise MissingDataError("series contains NaN; fill gaps upstream")

    if x.std() == 0.0:
        # Loess of a constant is that constant
        return Decomposition(trend=x.copy(), seasonal=np.zeros_like(x),
                             residual=np.zeros_like(x), period=period)

    stl = STL(x, period=period, seasonal=seasonal_window, trend=trend_window,
              low_pass=lowpass_window, robust=True)
    res = stl.fit(outer_iter=1)
    trend = np.array(res.trend, dtype=float)
    seasonal = np.array(res.seasonal, dtype=float)

    # Re-centre the seasonal so each complete cycle averages to zero; the
    # removed means belong to the slowly varying part and move to trend.
    n_full = len(x) // period
    for c in range(n_full):
        sl = slice(c * period, (c + 1) * period)
        m = seasonal[sl].mean()
        seasonal[sl] -= m
        trend[sl] += m
    if len(x) % period:
        sl = slice(n_full * period, len(x))
        m = seasonal[sl].mean()
        seasonal[sl] -= m
        trend[sl] += m

    residual = x - trend - seasonal
    return Decomposition(trend=trend, seasonal=seasonal, residual=residual,
                         period=period)


def normalize_trend(trend) -> tuple[np.ndarray, bool]:
    """Z-score a trend series (population std).

    Returns (normalized, degenerate): a zero-variance input yields all
    zeros with degenerate=True.
    """
    x = np.asarray(trend, dtype=float)
    if len(x) < 2:
        raise InsufficientDataError("trend too short to normalize")
    std = x.std()
    if std <= 1e-15 * max(1.0, abs(x.mean())):
        warnings.warn("degenerate (zero-variance) trend; returning zeros")
        return np.zeros_like(x), True
    return (x - x.mean()) / std, False


def seasonality_psd(seasonal, sample_interval_h: float = 1.0) -> np.ndarray:
    """Periodogram of the mean-removed seasonal component.

    Returns an array of (frequency [1/hour], power) rows up to Nyquist.
    """
    x = np.asarray(seasonal, dtype=float)
    if len(x) < 16:
        raise InsufficientDataError("need at least 16 samples for a PSD")
    f, p = periodogram(x - x.mean(), fs=1.0 / sample_interval_h)
    return np.column_stack([f, p])

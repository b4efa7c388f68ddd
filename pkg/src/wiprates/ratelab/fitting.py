"""Least-squares power-law fits on log-log axes."""

from __future__ import annotations

from typing import Iterable, NamedTuple, Tuple

import numpy as np
from scipy import stats

__all__ = ["NonPositiveValue", "Fit", "fit_loglog", "fit_loglog_fixed", "confidence_interval"]


class NonPositiveValue(ValueError):
    """A value passed to a log-log fit is zero or negative."""


class Fit(NamedTuple):
    slope: float
    stderr: float


def _prepare(points: Iterable[Tuple[float, float]]):
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (n, value) pairs")
    if pts.shape[0] < 4:
        raise ValueError("a slope needs at least 4 points")
    n, val = pts[:, 0], pts[:, 1]
    if np.any(n <= 1):
        raise ValueError("n must exceed 1")
    if np.any(~(val > 0)):
        raise NonPositiveValue("log-log fit needs positive values")
    return np.log(n), np.log(val)


def _ols(x: np.ndarray, y: np.ndarray) -> Fit:
    xc = x - x.mean()
    sxx = xc @ xc
    slope = (xc @ (y - y.mean())) / sxx
    resid = y - y.mean() - slope * xc
    dof = x.size - 2
    stderr = np.sqrt((resid @ resid) / dof / sxx)
    return Fit(float(slope), float(stderr))


def fit_loglog(points) -> Fit:
    """OLS slope of log(value) against log(n), with its standard error."""
    x, y = _prepare(points)
    return _ols(x, y)


def fit_loglog_fixed(points, log_power: float) -> Fit:
    """Slope a in value = c n^a (log n)^b with b held at ``log_power``."""
    x, y = _prepare(points)
    return _ols(x, y - log_power * np.log(x))


def confidence_interval(fit: Fit, count: int, level: float = 0.95) -> Tuple[float, float]:
    """Student-t interval for the slope of a fit on ``count`` points."""
    half = stats.t.ppf(0.5 + level / 2.0, count - 2) * fit.stderr
    return (fit.slope - half, fit.slope + half)

"""Convergence-rate exponents for the WIP, keyed by metric and regularity."""

from __future__ import annotations

import math
from typing import NamedTuple, Optional

__all__ = ["OutOfRegime", "Rate", "theoretical_exponent", "exponent_source"]


class OutOfRegime(ValueError):
    """No rate is available for the requested parameters."""


class Rate(NamedTuple):
    """Upper bound of the form n^(-exponent) (log n)^(log_power)."""

    exponent: float
    log_power: float


def _norm_metric(metric: str) -> str:
    key = metric.strip().lower()
    if key in ("w1", "wasserstein", "wasserstein1"):
        return "W1"
    if key in ("pi", "prokhorov"):
        return "Pi"
    raise OutOfRegime(f"unknown metric {metric!r}")


def _wasserstein_p(p: float) -> Rate:
    # no gain beyond p = 3; the bound freezes at its p = 3 value
    q = min(p, 3.0)
    return Rate((q - 2.0) / (2.0 * q), (q - 1.0) / (2.0 * q))


def theoretical_exponent(
    metric: str,
    p: Optional[float] = None,
    N: int = 1,
    gamma: Optional[float] = None,
) -> Rate:
    """Exponent pair for uniformly expanding (order ``p``) or LSV (``gamma``) settings.

    For LSV the bounds hold up to an arbitrarily small loss in the exponent,
    which is not represented; ``log_power`` is then 0.
    """
    metric = _norm_metric(metric)
    if N < 1:
        raise OutOfRegime("dimension N must be at least 1")
    if gamma is not None:
        if not 0.0 < gamma < 0.5:
            raise OutOfRegime(f"gamma={gamma} outside (0, 1/2)")
        if metric == "Pi" and N == 1:
            return Rate((1.0 - 2.0 * gamma) / 4.0, 0.0)
        w = 1.0 / 6.0 if gamma <= 1.0 / 3.0 else (1.0 - 2.0 * gamma) / 2.0
        return Rate(w, 0.0) if metric == "W1" else Rate(w / 2.0, 0.0)
    if p is None:
        raise OutOfRegime("either p or gamma is required")
    p = float(p)
    if math.isnan(p) or p <= 2.0:
        raise OutOfRegime(f"p={p} must exceed 2")
    if metric == "W1":
        return _wasserstein_p(p)
    if N == 1:
        if math.isinf(p):
            return Rate(0.25, 0.75)
        return Rate((p - 2.0) / (4.0 * p), 0.0)
    # Pi <= sqrt(W1) halves both powers
    w = _wasserstein_p(p)
    return Rate(w.exponent / 2.0, w.log_power / 2.0)


def exponent_source(metric: str, p: Optional[float] = None, N: int = 1, gamma=None) -> str:
    metric = _norm_metric(metric)
    if gamma is not None:
        if metric == "Pi" and N == 1:
            return "LSV, scalar observable, Prokhorov"
        return "LSV, 1-Wasserstein" + (" via Pi <= sqrt(W1)" if metric == "Pi" else "")
    if metric == "W1":
        return "order-p martingale approximation, 1-Wasserstein (frozen at p = 3)"
    if N == 1:
        return "scalar observable, Prokhorov" + (" with p = infinity" if p is not None and math.isinf(float(p)) else "")
    return "1-Wasserstein bound combined with Pi <= sqrt(W1)"

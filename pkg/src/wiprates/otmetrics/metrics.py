"""Wasserstein-1 and Prokhorov distances between uniform empirical path measures."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..pathspace import EmpiricalPathMeasure
from .assignment import solve_assignment
from .matching import max_matching

__all__ = [
    "SizeMismatch",
    "InequalityViolation",
    "InequalityReport",
    "cost_matrix",
    "pairwise_sup",
    "wasserstein1",
    "wasserstein1_cost",
    "prokhorov",
    "prokhorov_cost",
    "prokhorov_candidates",
    "check_inequalities",
    "distance_record",
]

# relative slack for the square-root comparison; the bound itself is exact in
# real arithmetic and only the final sqrt is rounded
_SQRT_SLACK = 1e-12
_CHUNK_ELEMENTS = 1 << 22


class SizeMismatch(ValueError):
    """The two empirical measures have different numbers of atoms."""


class InequalityViolation(AssertionError):
    """A metric inequality failed for exactly computed distances."""


def pairwise_sup(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sup distances between path value arrays sharing nodes.

    ``a`` has shape (M, K, N) and ``b`` shape (M', K, N); the result is M x M'.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.ndim == 2:
        a = a[..., None]
    if b.ndim == 2:
        b = b[..., None]
    if a.shape[1:] != b.shape[1:]:
        raise ValueError("path arrays disagree in node count or dimension")
    out = np.empty((a.shape[0], b.shape[0]))
    per_row = b.shape[0] * a.shape[1] * a.shape[2]
    step = max(1, _CHUNK_ELEMENTS // max(per_row, 1))
    for lo in range(0, a.shape[0], step):
        diff = a[lo : lo + step, None] - b[None]
        if diff.shape[-1] == 1:
            norms = np.abs(diff[..., 0])
        else:
            norms = np.sqrt(np.einsum("ijkn,ijkn->ijk", diff, diff))
        out[lo : lo + step] = norms.max(axis=-1)
    return out


def _union_values(measure: EmpiricalPathMeasure, nodes: np.ndarray) -> np.ndarray:
    if measure.common_nodes is not None and np.array_equal(measure.common_nodes, nodes):
        return measure.values()
    return np.stack([p(nodes) for p in measure.paths])


def cost_matrix(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> np.ndarray:
    """Entry (i, j) is the sup distance between path i of mu and path j of nu.

    All paths are evaluated on the union of their nodes. Every difference is
    linear between consecutive union nodes, so the maxima are exact.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    if (
        mu.common_nodes is not None
        and nu.common_nodes is not None
        and np.array_equal(mu.common_nodes, nu.common_nodes)
    ):
        return pairwise_sup(mu.values(), nu.values())
    nodes = np.unique(np.concatenate([p.nodes for p in mu.paths + nu.paths]))
    return pairwise_sup(_union_values(mu, nodes), _union_values(nu, nodes))


def _check_sizes(mu, nu):
    if len(mu) != len(nu):
        raise SizeMismatch(f"{len(mu)} atoms against {len(nu)}")


def wasserstein1_cost(cost) -> float:
    """W1 of two uniform M-atom measures from their cost matrix."""
    cost = np.asarray(cost, float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise SizeMismatch(f"cost matrix of shape {cost.shape}")
    m = cost.shape[0]
    cols = solve_assignment(cost)
    return float(cost[np.arange(m), cols].sum() / m)


def wasserstein1(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> float:
    _check_sizes(mu, nu)
    return wasserstein1_cost(cost_matrix(mu, nu))


def prokhorov_candidates(cost) -> np.ndarray:
    """Sorted distinct values among the costs and k/M, clipped to [0, 1]."""
    cost = np.asarray(cost, float)
    m = cost.shape[0]
    cand = np.concatenate([cost.ravel(), np.arange(m + 1) / m])
    return np.unique(cand[cand <= 1.0])


def _feasible(cost: np.ndarray, eps: float) -> bool:
    m = cost.shape[0]
    size = max_matching(cost <= eps)
    return eps >= (m - size) / m


def prokhorov_cost(cost) -> float:
    """Smallest candidate eps whose threshold graph has a matching of size >= M(1 - eps).

    Feasibility is monotone in eps, so a bisection over the sorted exact
    candidates finds the same value as a linear scan.
    """
    cost = np.asarray(cost, float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise SizeMismatch(f"cost matrix of shape {cost.shape}")
    cand = prokhorov_candidates(cost)
    lo, hi = 0, cand.size - 1  # cand[-1] == 1.0 is always feasible
    while lo < hi:
        mid = (lo + hi) // 2
        if _feasible(cost, cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def prokhorov(mu: EmpiricalPathMeasure, nu: EmpiricalPathMeasure) -> float:
    _check_sizes(mu, nu)
    return prokhorov_cost(cost_matrix(mu, nu))


@dataclass(frozen=True)
class InequalityReport:
    prokhorov: float
    wasserstein1: float
    coupled_sup: Optional[float]


def check_inequalities(
    mu: EmpiricalPathMeasure,
    nu: EmpiricalPathMeasure,
    coupled_sup: Optional[float] = None,
) -> InequalityReport:
    """Compute both metrics and verify Pi <= sqrt(W1) and Pi <= coupled_sup."""
    _check_sizes(mu, nu)
    cost = cost_matrix(mu, nu)
    w = wasserstein1_cost(cost)
    pi = prokhorov_cost(cost)
    if pi > np.sqrt(w) * (1.0 + _SQRT_SLACK):
        raise InequalityViolation(f"Prokhorov {pi} exceeds sqrt(W1) = {np.sqrt(w)}")
    if coupled_sup is not None and pi > coupled_sup:
        raise InequalityViolation(f"Prokhorov {pi} exceeds the coupling bound {coupled_sup}")
    return InequalityReport(pi, w, coupled_sup)


def distance_record(n, m: int, d: int, w1, pi, seed) -> str:
    """One JSON line with keys n, M, d, W1, Pi, seed."""
    rec = {"n": n, "M": m, "d": d, "W1": w1, "Pi": pi, "seed": seed}
    return json.dumps(rec, sort_keys=False)

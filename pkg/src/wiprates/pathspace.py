"""Continuous piecewise-linear paths on [0, 1] and the processes built from them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

from .dynsys import ContractError, make_rng
from .suspension import DEFAULT_DT, FlowObservable, SuspensionFlow, cumulative_integrals

__all__ = [
    "NotPSD",
    "PiecewisePath",
    "EmpiricalPathMeasure",
    "build_Bn",
    "build_Wn",
    "birkhoff_paths",
    "flow_paths",
    "sample_brownian",
    "brownian_paths",
    "spectral_factor",
    "h_reversal",
    "sup_distance",
    "write_paths_csv",
    "read_paths_csv",
]


class NotPSD(ValueError):
    """Covariance matrix is not positive semidefinite beyond rounding."""


@dataclass(frozen=True)
class PiecewisePath:
    """Linear interpolation of ``values`` (shape (K, N)) at ``nodes`` (0 = t_0 < ... < t_K-1 = 1)."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, float)
        values = np.asarray(self.values, float)
        if values.ndim == 1:
            values = values[:, None]
        if nodes.ndim != 1 or nodes.size < 2:
            raise ContractError("a path needs at least two nodes")
        if values.shape[0] != nodes.size:
            raise ContractError("one value per node required")
        if nodes[0] != 0.0 or nodes[-1] != 1.0 or np.any(np.diff(nodes) <= 0):
            raise ContractError("nodes must increase strictly from 0 to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        out = np.stack([np.interp(t, self.nodes, self.values[:, i]) for i in range(self.dim)], axis=-1)
        return out

    def restrict(self, grid: int) -> "PiecewisePath":
        """The path evaluated at i / grid and re-interpolated there."""
        nodes = np.linspace(0.0, 1.0, grid + 1)
        return PiecewisePath(nodes, self(nodes))

    def scaled(self, factor: float) -> "PiecewisePath":
        return PiecewisePath(self.nodes, factor * self.values)


class EmpiricalPathMeasure:
    """Uniform measure on ``M`` paths of a common dimension.

    When all paths share their nodes the values are also available as a
    dense array of shape (M, K, N), which the metric code uses directly.
    """

    def __init__(self, paths: Sequence[PiecewisePath]):
        paths = list(paths)
        if not paths:
            raise ContractError("an empirical measure needs at least one path")
        dims = {p.dim for p in paths}
        if len(dims) != 1:
            raise ContractError("all paths must share their dimension")
        self.paths: List[PiecewisePath] = paths
        first = paths[0].nodes
        self.common_nodes: Optional[np.ndarray] = None
        if all(p.nodes.size == first.size and np.array_equal(p.nodes, first) for p in paths):
            self.common_nodes = first

    @classmethod
    def from_array(cls, nodes: np.ndarray, values: np.ndarray) -> "EmpiricalPathMeasure":
        values = np.asarray(values, float)
        if values.ndim == 2:
            values = values[..., None]
        return cls([PiecewisePath(nodes, v) for v in values])

    @property
    def size(self) -> int:
        return len(self.paths)

    @property
    def dim(self) -> int:
        return self.paths[0].dim

    def __len__(self) -> int:
        return len(self.paths)

    def values(self) -> np.ndarray:
        if self.common_nodes is None:
            raise ContractError("paths do not share nodes")
        return np.stack([p.values for p in self.paths])

    def permuted(self, order) -> "EmpiricalPathMeasure":
        return EmpiricalPathMeasure([self.paths[i] for i in order])

    def scaled(self, factor: float) -> "EmpiricalPathMeasure":
        return EmpiricalPathMeasure([p.scaled(factor) for p in self.paths])

    def restrict(self, grid: int) -> "EmpiricalPathMeasure":
        return EmpiricalPathMeasure([p.restrict(grid) for p in self.paths])


def _as_vectors(values: np.ndarray, lead: int) -> np.ndarray:
    values = np.asarray(values, float)
    return values[..., None] if values.ndim == lead else values


def birkhoff_paths(orbits: np.ndarray, v: Callable, n: int) -> np.ndarray:
    """Values of B_n at k/n, k = 0..n, for each orbit row. Shape (W, n + 1, N)."""
    orbits = np.atleast_2d(np.asarray(orbits, float))
    if orbits.shape[1] < n:
        raise ContractError("orbit shorter than n")
    vals = _as_vectors(v(orbits[:, :n]), 2)
    out = np.zeros((orbits.shape[0], n + 1, vals.shape[-1]))
    np.cumsum(vals, axis=1, out=out[:, 1:])
    return out / np.sqrt(n)


def build_Bn(orbit, v: Callable, n: int) -> PiecewisePath:
    """B_n(k/n) = n^{-1/2} sum_{j<k} v(x_j), linearly interpolated."""
    if n < 1:
        raise ContractError("n must be at least 1")
    vals = birkhoff_paths(np.asarray(orbit, float)[None, :], v, n)[0]
    return PiecewisePath(np.arange(n + 1) / n, vals)


def flow_paths(
    flow: SuspensionFlow,
    v: FlowObservable,
    orbits: np.ndarray,
    heights: np.ndarray,
    n: float,
    grid: int,
    dt: float = DEFAULT_DT,
) -> np.ndarray:
    """Values of W_n at i/grid for each start. Shape (W, grid + 1, N)."""
    if grid < 2:
        raise ContractError("grid must be at least 2")
    times = n * np.arange(grid + 1) / grid
    return cumulative_integrals(flow, v, orbits, heights, times, dt) / np.sqrt(n)


def build_Wn(
    flow: SuspensionFlow,
    v: FlowObservable,
    start,
    n: float,
    grid: int,
    dt: float = DEFAULT_DT,
    orbit: Optional[np.ndarray] = None,
) -> PiecewisePath:
    """W_n(t) = n^{-1/2} * integral of v along the flow over [0, n t], at t = i/grid."""
    from .suspension import _check_start, _orbit_for_span

    x, u = _check_start(flow, start)
    if orbit is None:
        orbit = _orbit_for_span(flow, x, n + u)
    vals = flow_paths(flow, v, orbit[None, :], np.array([u]), n, grid, dt)[0]
    return PiecewisePath(np.linspace(0.0, 1.0, grid + 1), vals)


def spectral_factor(sigma, tol: float = 1e-6) -> np.ndarray:
    """A factor L with L L^T = sigma from the eigendecomposition (handles singular sigma)."""
    sigma = np.atleast_2d(np.asarray(sigma, float))
    sym = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sym)
    clamped = np.clip(evals, 0.0, None)
    repaired = (evecs * clamped) @ evecs.T
    if np.max(np.abs(repaired - sigma)) > tol:
        raise NotPSD(f"covariance has eigenvalues {evals}")
    return evecs * np.sqrt(clamped)


def brownian_paths(sigma, grid: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` Brownian paths with covariance sigma at i/grid. Shape (count, grid + 1, N)."""
    factor = spectral_factor(sigma)
    dim = factor.shape[0]
    z = rng.standard_normal((count, grid, dim))
    inc = z @ factor.T / np.sqrt(grid)
    out = np.zeros((count, grid + 1, dim))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_brownian(sigma, grid: int, seed) -> PiecewisePath:
    """Brownian motion with covariance sigma sampled at i/grid, path(0) = 0."""
    if grid < 1:
        raise ContractError("grid must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    vals = brownian_paths(sigma, grid, 1, rng)[0]
    return PiecewisePath(np.linspace(0.0, 1.0, grid + 1), vals)


def h_reversal(path: PiecewisePath) -> PiecewisePath:
    """(h f)(t) = f(1) - f(1 - t)."""
    nodes = 1.0 - path.nodes[::-1]
    nodes[0], nodes[-1] = 0.0, 1.0
    values = path.values[-1] - path.values[::-1]
    return PiecewisePath(nodes, values)


def sup_distance(a: PiecewisePath, b: PiecewisePath) -> float:
    """Exact sup over [0, 1] of |a(t) - b(t)| (Euclidean norm in R^N).

    a - b is linear between consecutive union nodes and the norm is convex,
    so the maximum sits at a union node.
    """
    if a.dim != b.dim:
        raise ContractError("paths differ in dimension")
    if a.nodes.size == b.nodes.size and np.array_equal(a.nodes, b.nodes):
        diff = a.values - b.values
    else:
        t = np.union1d(a.nodes, b.nodes)
        diff = a(t) - b(t)
    return float(np.max(np.sqrt(np.sum(diff * diff, axis=-1))))


def write_paths_csv(paths: Iterable[PiecewisePath], fh) -> None:
    """Rows ``path, t, v1..vN``, one per node."""
    paths = list(paths)
    dim = paths[0].dim if paths else 1
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["path", "t"] + [f"v{i + 1}" for i in range(dim)])
    for k, p in enumerate(paths):
        for t, row in zip(p.nodes, p.values):
            writer.writerow([k, repr(float(t))] + [repr(float(x)) for x in row])


def read_paths_csv(fh) -> List[PiecewisePath]:
    reader = csv.reader(fh)
    header = next(reader)
    if header[:2] != ["path", "t"]:
        raise ContractError("expected columns path, t, v1..vN")
    groups: dict = {}
    for row in reader:
        if not row:
            continue
        groups.setdefault(int(row[0]), []).append([float(x) for x in row[1:]])
    out = []
    for k in sorted(groups):
        arr = np.asarray(groups[k])
        out.append(PiecewisePath(arr[:, 0], arr[:, 1:]))
    return out

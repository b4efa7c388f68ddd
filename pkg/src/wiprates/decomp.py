"""Martingale-coboundary decompositions through the transfer operator.

Two function representations are supported:

* :class:`TrigPoly` -- trigonometric polynomials on the circle. The doubling
  map's transfer operator maps these to trigonometric polynomials exactly,
  which makes them the oracle representation.
* :class:`GridFunction` -- tables on a fixed grid with linear interpolation.
  Operators act on them as sparse matrices.

Given a mean-zero ``v`` the primary decomposition is ``v = m + chi o T - chi``
with ``chi = sum_{k>=1} P^k v`` and ``P m = 0``; the covariance is the
integral of ``m m^T``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .dynsys import ContractError, InducedMap, MapSystem, OrbitSampler, sample_orbit, step

__all__ = [
    "NoDecay",
    "TrigPoly",
    "GridFunction",
    "TransferOperator",
    "ExactDoubling",
    "GridGibbsMarkov",
    "Decomposition",
    "apply_transfer",
    "primary_decomposition",
    "secondary_decomposition",
    "green_kubo_sigma",
    "induced_sigma",
    "InducedSum",
    "FlowDecomposition",
    "flow_decomposition",
]


class NoDecay(RuntimeError):
    """Iterates of the transfer operator stopped decreasing."""


# --------------------------------------------------------------------------
# function representations


@dataclass(frozen=True)
class TrigPoly:
    """``f_i(x) = sum_k cos_c[i, k] cos(2 pi k x) + sin_c[i, k] sin(2 pi k x)``."""

    cos_c: np.ndarray
    sin_c: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.cos_c, float))
        s = np.atleast_2d(np.asarray(self.sin_c, float))
        width = max(c.shape[1], s.shape[1])
        c = np.pad(c, ((0, 0), (0, width - c.shape[1])))
        s = np.pad(s, ((0, 0), (0, width - s.shape[1])))
        s[:, 0] = 0.0
        object.__setattr__(self, "cos_c", c)
        object.__setattr__(self, "sin_c", s)

    @classmethod
    def cos(cls, freq: int, amp: float = 1.0) -> "TrigPoly":
        c = np.zeros((1, freq + 1))
        c[0, freq] = amp
        return cls(c, np.zeros_like(c))

    @classmethod
    def constant(cls, value, dim: int = 1) -> "TrigPoly":
        c = np.zeros((dim, 1))
        c[:, 0] = value
        return cls(c, np.zeros_like(c))

    @classmethod
    def zero(cls, dim: int = 1) -> "TrigPoly":
        return cls.constant(0.0, dim)

    @classmethod
    def stack(cls, parts) -> "TrigPoly":
        width = max(p.cos_c.shape[1] for p in parts)
        pad = lambda a: np.pad(a, ((0, 0), (0, width - a.shape[1])))
        return cls(
            np.vstack([pad(p.cos_c) for p in parts]),
            np.vstack([pad(p.sin_c) for p in parts]),
        )

    @property
    def dim(self) -> int:
        return self.cos_c.shape[0]

    @property
    def degree(self) -> int:
        nz = np.nonzero(np.any(self.cos_c != 0, axis=0) | np.any(self.sin_c != 0, axis=0))[0]
        return int(nz.max()) if nz.size else 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        k = np.arange(self.cos_c.shape[1])
        ang = 2.0 * np.pi * x[..., None] * k
        return np.cos(ang) @ self.cos_c.T + np.sin(ang) @ self.sin_c.T

    def __add__(self, other: "TrigPoly") -> "TrigPoly":
        width = max(self.cos_c.shape[1], other.cos_c.shape[1])
        pad = lambda a: np.pad(a, ((0, 0), (0, width - a.shape[1])))
        return TrigPoly(pad(self.cos_c) + pad(other.cos_c), pad(self.sin_c) + pad(other.sin_c))

    def __neg__(self) -> "TrigPoly":
        return TrigPoly(-self.cos_c, -self.sin_c)

    def __sub__(self, other: "TrigPoly") -> "TrigPoly":
        return self + (-other)

    def scale(self, a: float) -> "TrigPoly":
        return TrigPoly(a * self.cos_c, a * self.sin_c)

    def mean(self) -> np.ndarray:
        return self.cos_c[:, 0].copy()

    def sup_bound(self) -> float:
        """Upper bound for the sup norm; zero exactly when the polynomial is zero."""
        return float(np.max(np.abs(self.cos_c).sum(axis=1) + np.abs(self.sin_c).sum(axis=1)))

    def outer(self) -> "TrigPoly":
        """Products f_i f_j, flattened row-major into dim**2 components."""
        parts = [_trig_product(self, i, j) for i in range(self.dim) for j in range(self.dim)]
        return TrigPoly.stack(parts)


def _trig_product(f: TrigPoly, i: int, j: int) -> TrigPoly:
    a, b = f.cos_c[i], f.sin_c[i]
    c, d = f.cos_c[j], f.sin_c[j]
    n = a.size
    cos_out = np.zeros(2 * n - 1)
    sin_out = np.zeros(2 * n - 1)
    for p in np.nonzero((a != 0) | (b != 0))[0]:
        for q in np.nonzero((c != 0) | (d != 0))[0]:
            s, t = p + q, abs(p - q)
            sign = 1.0 if p >= q else -1.0
            # cos cos, sin sin, sin cos, cos sin product-to-sum identities
            cos_out[s] += 0.5 * (a[p] * c[q] - b[p] * d[q])
            cos_out[t] += 0.5 * (a[p] * c[q] + b[p] * d[q])
            sin_out[s] += 0.5 * (b[p] * c[q] + a[p] * d[q])
            sin_out[t] += 0.5 * sign * (b[p] * c[q] - a[p] * d[q])
    return TrigPoly(cos_out[None, :], sin_out[None, :])


@dataclass
class GridFunction:
    """Values of an R^dim function on ``points`` with linear interpolation.

    Periodic grids are uniform on [0, 1) with the value at 1 identified with
    the value at 0.
    """

    points: np.ndarray
    values: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, float)
        vals = np.asarray(self.values, float)
        if vals.ndim == 1:
            vals = vals[:, None]
        self.values = vals

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        mat = _interp_matrix(x.ravel(), self.points, self.periodic)
        return (mat @ self.values).reshape(x.shape + (self.dim,))

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.points, values, self.periodic)

    def __add__(self, other):
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        return self.with_values(self.values - other.values)

    def __neg__(self):
        return self.with_values(-self.values)

    def scale(self, a: float):
        return self.with_values(a * self.values)

    def sup_bound(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def outer(self) -> "GridFunction":
        v = self.values
        return self.with_values(np.einsum("gi,gj->gij", v, v).reshape(v.shape[0], -1))


Function = Union[TrigPoly, GridFunction]


def _interp_matrix(x: np.ndarray, grid: np.ndarray, periodic: bool) -> sp.csr_matrix:
    """Sparse matrix of linear-interpolation weights of ``grid`` values at ``x``."""
    g = grid.size
    if periodic:
        h = 1.0 / g
        pos = np.mod(x, 1.0) / h
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        lo %= g
        hi = (lo + 1) % g
    else:
        xc = np.clip(x, grid[0], grid[-1])
        hi = np.clip(np.searchsorted(grid, xc, side="right"), 1, g - 1)
        lo = hi - 1
        frac = (xc - grid[lo]) / (grid[hi] - grid[lo])
    rows = np.arange(x.size)
    data = np.concatenate([1.0 - frac, frac])
    return sp.csr_matrix(
        (data, (np.concatenate([rows, rows]), np.concatenate([lo, hi]))), shape=(x.size, g)
    )


# --------------------------------------------------------------------------
# transfer operators


class TransferOperator:
    """Transfer operator of a map with respect to its invariant measure.

    Grid-backed operators hold sparse matrices ``transfer`` (P on tables),
    ``composition`` (f -> f o T on tables) and quadrature weights
    ``weights`` of the invariant measure with ``weights @ (P f) == weights @ f``.

    Plain callables are transformed exactly: ``apply`` evaluates them at the
    true preimages of the grid points instead of interpolating a table, so
    observables with jumps at partition boundaries lose nothing on the first
    application. Every later iterate is continuous and safe to tabulate.
    """

    mode: str = ""
    points: np.ndarray
    periodic: bool
    transfer: sp.csr_matrix
    composition: sp.csr_matrix
    weights: np.ndarray

    def tabulate(self, f) -> GridFunction:
        if isinstance(f, GridFunction):
            return f
        return GridFunction(self.points, np.asarray(f(self.points), float), self.periodic)

    def apply(self, f):
        if isinstance(f, GridFunction):
            return f.with_values(self.transfer @ f.values)
        return GridFunction(self.points, self._apply_exact(f), self.periodic)

    def _apply_exact(self, f) -> np.ndarray:
        raise NotImplementedError

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.transfer.sum(axis=1)).ravel()

    def compose(self, f):
        if isinstance(f, GridFunction):
            return f.with_values(self.composition @ f.values)
        return self.tabulate(lambda x: f(self.forward(x)))

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def integrate(self, f) -> np.ndarray:
        return self.weights @ self.tabulate(f).values

    def fine_quadrature(self, refine: int):
        """Midpoints of a ``refine``-times finer grid with invariant-measure weights."""
        raise NotImplementedError

    def sup_norm(self, f) -> float:
        return self.tabulate(f).sup_bound()

    def describe(self) -> dict:
        return {"mode": self.mode, "grid_size": int(self.points.size)}


def _column(values) -> np.ndarray:
    values = np.asarray(values, float)
    return values[:, None] if values.ndim == 1 else values


class ExactDoubling(TransferOperator):
    """``(P v)(x) = (v(x/2) + v((x+1)/2)) / 2`` for the doubling map and Lebesgue measure.

    Trigonometric polynomials are transformed exactly: frequency ``2k``
    becomes ``k`` and odd frequencies vanish. Grid functions live on the
    periodic grid ``i / grid_size``, or with ``periodic=False`` on
    ``grid_size + 1`` nodes including both endpoints (for observables whose
    values at 0 and 1 differ).
    """

    mode = "exact_doubling"

    def __init__(self, grid_size: int = 4096, periodic: bool = True):
        if grid_size < 2:
            raise ContractError("grid size must be at least 2")
        self.grid_size = grid_size
        self.periodic = periodic
        if periodic:
            self.points = np.arange(grid_size) / grid_size
            self.weights = np.full(grid_size, 1.0 / grid_size)
        else:
            # endpoints included, trapezoid weights; exact duality still holds
            self.points = np.linspace(0.0, 1.0, grid_size + 1)
            self.weights = np.full(grid_size + 1, 1.0 / grid_size)
            self.weights[[0, -1]] *= 0.5
        half = 0.5 * self.points
        self.transfer = 0.5 * (
            _interp_matrix(half, self.points, periodic)
            + _interp_matrix(half + 0.5, self.points, periodic)
        ).tocsr()
        self.composition = _interp_matrix(self.forward(self.points), self.points, periodic)

    def forward(self, x):
        if self.periodic:
            return np.mod(2.0 * x, 1.0)
        return np.where(x < 0.5, 2.0 * x, 2.0 * x - 1.0)

    def _apply_exact(self, f) -> np.ndarray:
        x = self.points
        return 0.5 * (_column(f(0.5 * x)) + _column(f(0.5 * x + 0.5)))

    def fine_quadrature(self, refine: int):
        n = self.grid_size * refine
        return (np.arange(n) + 0.5) / n, np.full(n, 1.0 / n)

    def describe(self) -> dict:
        return {"mode": self.mode, "grid_size": int(self.grid_size), "periodic": self.periodic}

    def apply(self, f):
        if isinstance(f, TrigPoly):
            return TrigPoly(f.cos_c[:, ::2], f.sin_c[:, ::2])
        return super().apply(f)

    def compose(self, f):
        if isinstance(f, TrigPoly):
            n = f.cos_c.shape[1]
            c = np.zeros((f.dim, 2 * n - 1))
            s = np.zeros_like(c)
            c[:, ::2] = f.cos_c
            s[:, ::2] = f.sin_c
            return TrigPoly(c, s)
        return super().compose(f)

    def integrate(self, f) -> np.ndarray:
        if isinstance(f, TrigPoly):
            return f.mean()
        return super().integrate(f)

    def sup_norm(self, f) -> float:
        if isinstance(f, TrigPoly):
            return f.sup_bound()
        return super().sup_norm(f)


def _lower_branch_inverse(z: np.ndarray, gamma: float) -> np.ndarray:
    """Solve x (1 + 2^g x^g) = z on [0, 1/2) by Newton's method (convex, from the right)."""
    c = 2.0**gamma
    x = z / (1.0 + c * z**gamma)
    for _ in range(60):
        xg = x**gamma
        dx = (x * (1.0 + c * xg) - z) / (1.0 + c * (1.0 + gamma) * xg)
        x = x - dx
        if np.all(np.abs(dx) <= 4e-16 * x):
            break
    return x


def _lower_branch_slope(x: np.ndarray, gamma: float) -> np.ndarray:
    return 1.0 + 2.0**gamma * (1.0 + gamma) * x**gamma


@dataclass(frozen=True)
class InducedSum:
    """v_Y(y) = sum_{j < tau(y)} (v(T^j y) - shift) for the first return to Y = (1/2, 1]."""

    v: Callable
    induced: InducedMap
    shift: np.ndarray = 0.0

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, float)
        flat = y.ravel()
        tau, _ = self.induced.first_return(flat)
        x = flat.copy()
        acc = np.zeros(_column(self.v(flat[:1])).shape[1:])[None].repeat(flat.size, 0)
        for j in range(int(tau.max())):
            live = j < tau
            acc[live] += _column(self.v(x[live])) - self.shift
            x[live] = self.induced.base(x[live])
        return acc.reshape(y.shape + acc.shape[1:])


class GridGibbsMarkov(TransferOperator):
    """Transfer operator of the first-return map of LSV to Y = (1/2, 1].

    Built on the cell midpoints of a uniform grid of Y. The branch sum over
    the partition {tau = j} is truncated at ``branches`` terms, the smallest
    count for which the Lebesgue mass of {tau > branches} in Y falls below
    ``tail_tol``. The invariant density comes from power iteration of the
    discretised Lebesgue transfer operator; the quadrature weights are the
    stationary vector of the resulting Markov matrix, so P 1 = 1 and the
    mean is preserved exactly by construction.
    """

    mode = "grid_gibbs_markov"

    def __init__(
        self,
        gamma: float,
        grid_size: int = 4096,
        tail_tol: float = 1e-10,
        max_return: int = 1_000_000,
    ):
        if not 0.0 < gamma < 1.0:
            raise ContractError("gamma must lie in (0, 1)")
        self.gamma = gamma
        self.grid_size = grid_size
        self.tail_tol = tail_tol
        self.periodic = False
        self.induced = InducedMap(MapSystem.lsv(gamma), max_return)
        self.points = 0.5 + (np.arange(grid_size) + 0.5) / (2.0 * grid_size)

        lebesgue = self._lebesgue_transfer()
        self.density = self._perron(lebesgue)
        p = (sp.diags(1.0 / self.density) @ lebesgue @ sp.diags(self.density)).tocsr()
        rows = np.asarray(p.sum(axis=1)).ravel()
        self.row_defect = float(np.max(np.abs(rows - 1.0)))
        self._row_scale = 1.0 / (rows * self.density)
        self.transfer = (sp.diags(1.0 / rows) @ p).tocsr()
        self.weights = self._stationary(self.transfer)

        tau, fy = self.induced.first_return(self.points)
        self.return_times = tau
        self._images = fy
        self.composition = _interp_matrix(fy, self.points, False)

    def _branches(self):
        """Yield (j, chain point T y_j, preimage y_j, 1/|F'(y_j)|) for j = 1, 2, ..."""
        gamma = self.gamma
        w = self.points.copy()
        log_slope = np.full(self.grid_size, math.log(2.0))
        edge = 0.5
        j = 0
        while True:
            j += 1
            yield j, w, 0.5 * (w + 1.0), np.exp(-log_slope)
            # Lebesgue-normalised mass of {tau > j} in Y is the (j-1)-fold lower inverse of 1/2
            if edge < self.tail_tol:
                return
            w = _lower_branch_inverse(w, gamma)
            log_slope = log_slope + np.log(_lower_branch_slope(w, gamma))
            edge = float(_lower_branch_inverse(np.array([edge]), gamma)[0])

    def _lebesgue_transfer(self) -> sp.csr_matrix:
        g = self.grid_size
        total = sp.csr_matrix((g, g))
        rows, cols, data = [], [], []
        j = 0
        for j, _, pre, weight in self._branches():
            mat = _interp_matrix(pre, self.points, False).tocoo()
            rows.append(mat.row)
            cols.append(mat.col)
            data.append(mat.data * weight[mat.row])
            if len(rows) == 256:
                total = total + self._coo(rows, cols, data)
                rows, cols, data = [], [], []
        if rows:
            total = total + self._coo(rows, cols, data)
        self.branches = j
        return total.tocsr()

    def _coo(self, rows, cols, data) -> sp.csr_matrix:
        g = self.grid_size
        return sp.csr_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(g, g)
        )

    def _perron(self, lebesgue: sp.csr_matrix) -> np.ndarray:
        h = np.ones(self.grid_size)
        for _ in range(5000):
            nxt = lebesgue @ h
            nxt /= nxt.mean()
            done = np.max(np.abs(nxt - h)) < 1e-14
            h = nxt
            if done:
                break
        return h

    @staticmethod
    def _stationary(p: sp.csr_matrix) -> np.ndarray:
        pt = p.T.tocsr()
        pi = np.full(p.shape[0], 1.0 / p.shape[0])
        for _ in range(5000):
            nxt = pt @ pi
            nxt /= nxt.sum()
            done = np.max(np.abs(nxt - pi)) < 1e-18
            pi = nxt
            if done:
                break
        return pi

    def forward(self, y):
        return self.induced(y)

    def compose(self, f):
        if isinstance(f, GridFunction):
            return f.with_values(self.composition @ f.values)
        return self.tabulate(lambda y: f(self._images) if y is self.points else f(self.forward(y)))

    def _apply_exact(self, f) -> np.ndarray:
        # branch sum weighted by the invariant density at the preimages
        dens = GridFunction(self.points, self.density)
        acc = None
        if isinstance(f, InducedSum):
            running = None
            for j, w, pre, weight in self._branches():
                if j > 1:
                    step_val = _column(f.v(w)) - f.shift
                    running = step_val if running is None else running + step_val
                vals = _column(f.v(pre)) - f.shift
                if running is not None:
                    vals = vals + running
                term = (weight * dens(pre)[:, 0])[:, None] * vals
                acc = term if acc is None else acc + term
        else:
            for _, _, pre, weight in self._branches():
                term = (weight * dens(pre)[:, 0])[:, None] * _column(f(pre))
                acc = term if acc is None else acc + term
        return acc * self._row_scale[:, None]

    def fine_quadrature(self, refine: int):
        n = self.grid_size * refine
        y = 0.5 + (np.arange(n) + 0.5) / (2.0 * n)
        w = np.interp(y, self.points, self.weights)
        return y, w / w.sum()

    def induced_sum(self, v: Callable, shift=0.0) -> InducedSum:
        return InducedSum(v, self.induced, np.atleast_1d(np.asarray(shift, float)))

    def mean_return_time(self) -> float:
        return float(self.weights @ self.return_times)

    def describe(self) -> dict:
        return {
            "mode": self.mode,
            "gamma": self.gamma,
            "grid_size": int(self.grid_size),
            "branches": int(self.branches),
            "tail_tol": self.tail_tol,
            "row_defect_before_renormalisation": self.row_defect,
        }


def apply_transfer(op: TransferOperator, v):
    """P v: exact for trigonometric polynomials and callables, by interpolation for tables."""
    return op.apply(v)


# --------------------------------------------------------------------------
# decompositions


@dataclass
class Decomposition:
    """``v = m + chi o T - chi`` on the operator's grid, with covariance ``sigma``.

    ``residual`` is the sup over the grid of |P m|, with P applied branch by
    branch (so P(chi o T) = chi P1 holds without interpolation).
    """

    m: Function
    chi: Function
    sigma: np.ndarray
    residual: float
    truncation_K: int
    operator: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def identity_defect(self, op: TransferOperator, v, points=None) -> float:
        """Max of |v - m - chi o T + chi| over the operator grid (2048 points for trig input)."""
        if isinstance(v, TrigPoly):
            if points is None:
                points = np.arange(2048) / 2048
            chi_t = op.compose(self.chi)(points)
            diff = v(points) - self.m(points) - chi_t + self.chi(points)
        else:
            diff = (
                op.tabulate(v).values
                - op.tabulate(self.m).values
                - op.compose(self.chi).values
                + op.tabulate(self.chi).values
            )
        return float(np.max(np.abs(diff)))

    def to_json(self, points=None) -> str:
        if points is None:
            points = self.m.points if isinstance(self.m, GridFunction) else np.arange(2048) / 2048
        record = {
            "grid": np.asarray(points).tolist(),
            "m": np.asarray(self.m(points)).tolist(),
            "chi": np.asarray(self.chi(points)).tolist(),
            "sigma": self.sigma.tolist(),
            "residual": self.residual,
            "truncation_K": self.truncation_K,
            "operator": self.operator,
        }
        if isinstance(self.m, TrigPoly):
            record["m_coefficients"] = {"cos": self.m.cos_c.tolist(), "sin": self.m.sin_c.tolist()}
            record["chi_coefficients"] = {"cos": self.chi.cos_c.tolist(), "sin": self.chi.sin_c.tolist()}
        return json.dumps(record)


def primary_decomposition(
    op: TransferOperator,
    v,
    tol: float = 1e-10,
    max_terms: int = 200,
    patience: int = 50,
    mean_tol: float = 1e-8,
    refine: int = 16,
) -> Decomposition:
    """Decompose a mean-zero ``v`` as ``m + chi o T - chi`` with ``P m = 0``.

    ``chi`` sums ``P^k v`` for k = 1, 2, ... until the sup norm of the next
    term drops below ``tol`` (at most ``max_terms`` terms). Raises NoDecay
    if the norms fail to reach a new minimum for ``patience`` consecutive
    terms.

    For callable ``v`` on a grid-backed operator the covariance integral uses
    ``m`` evaluated pointwise on a ``refine``-times finer grid, since ``v``
    may jump inside grid cells.
    """
    mean = op.integrate(v)
    if np.max(np.abs(mean)) >= mean_tol:
        raise ContractError(f"observable is not mean zero (mean {mean})")

    first = op.apply(v)
    if isinstance(first, GridFunction):
        # exact and discretised measures differ slightly; keep the iterates centred
        first = first.with_values(first.values - op.integrate(first)[None, :])
    term = first
    chi = first.scale(0.0)
    best, stale, used = math.inf, 0, 0
    for k in range(1, max_terms + 1):
        if k > 1:
            term = op.apply(term)
        norm = op.sup_norm(term)
        if norm < tol:
            break
        chi = chi + term
        used = k
        if norm < best:
            best, stale = norm, 0
        else:
            stale += 1
            if stale >= patience:
                raise NoDecay(f"||P^k v|| stuck near {best:.3e} after {k} terms")

    if isinstance(v, TrigPoly):
        chi = _prune(chi)
        m = _prune(v - op.compose(chi) + chi)
        residual = op.sup_norm(op.apply(m))
    else:
        m = op.tabulate(v) - op.compose(chi) + chi
        pm = first.values + op.apply(chi).values - chi.values * op.row_sums()[:, None]
        residual = float(np.max(np.abs(pm)))
    dim = m.dim
    if isinstance(v, (TrigPoly, GridFunction)) or refine <= 1:
        sigma = np.asarray(op.integrate(m.outer()), float).reshape(dim, dim)
    else:
        pts, wts = op.fine_quadrature(refine)
        mf = _column(v(pts)) - chi(op.forward(pts)) + chi(pts)
        sigma = np.einsum("g,gi,gj->ij", wts, mf, mf)
    sigma = 0.5 * (sigma + sigma.T)
    return Decomposition(m, chi, sigma, residual, used, op.describe())


def _prune(f: TrigPoly) -> TrigPoly:
    c = np.where(np.abs(f.cos_c) < 1e-15, 0.0, f.cos_c)
    s = np.where(np.abs(f.sin_c) < 1e-15, 0.0, f.sin_c)
    width = TrigPoly(c, s).degree + 1
    return TrigPoly(c[:, :width], s[:, :width])


def secondary_decomposition(op: TransferOperator, d: Decomposition):
    """Centred conditional variance ``(P(m m^T)) o T - Sigma``, flattened to dim**2 components.

    The constant subtracted is the integral of the uncentred function, which
    equals Sigma up to discretisation and makes the result mean zero.
    """
    raw = op.compose(op.apply(d.m.outer()))
    centre = op.integrate(raw)
    if isinstance(raw, TrigPoly):
        return _prune(raw - TrigPoly.constant(centre, raw.dim))
    return raw.with_values(raw.values - centre[None, :])


def green_kubo_sigma(
    sampler: OrbitSampler,
    v: Callable,
    max_lag: int,
    orbit_len: int,
) -> np.ndarray:
    """Truncated autocovariance sum along one long orbit.

    Returns ``C_0 + sum_{k=1}^{max_lag} (C_k + C_k^T)``, symmetrised, with
    negative eigenvalues clamped to zero (a warning is issued when that
    happens).
    """
    if orbit_len <= 10 * max_lag:
        raise ContractError("orbit_len must be much larger than max_lag")
    orbit = sample_orbit(sampler, orbit_len)
    vals = _column(v(orbit))
    vals = vals - vals.mean(axis=0)
    n = vals.shape[0]
    sigma = vals.T @ vals / n
    for k in range(1, max_lag + 1):
        ck = vals[:-k].T @ vals[k:] / (n - k)
        sigma = sigma + ck + ck.T
    sigma = 0.5 * (sigma + sigma.T)
    evals, evecs = np.linalg.eigh(sigma)
    if np.any(evals < 0):
        warnings.warn(f"clamping negative eigenvalues {evals[evals < 0]} of the Green-Kubo estimate")
        sigma = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
    return sigma


def induced_sigma(op: GridGibbsMarkov, v: Callable, tol: float = 1e-10):
    """Covariance of the Birkhoff sums of ``v`` under the LSV map via the induced map.

    ``v`` is centred with respect to the operator's invariant measure using
    Kac's formula, then the induced observable is decomposed and its
    covariance divided by the mean return time (computed on the refined
    quadrature grid, as tau jumps inside grid cells). Returns (sigma, mean of v,
    decomposition of the induced observable).
    """
    mean_v = op.integrate(op.induced_sum(v)) / op.mean_return_time()
    dec = primary_decomposition(op, op.induced_sum(v, mean_v), tol=tol)
    pts, wts = op.fine_quadrature(16)
    tau_bar = float(wts @ op.induced.first_return(pts)[0])
    return dec.sigma / tau_bar, mean_v, dec


@dataclass
class FlowDecomposition:
    """Suspension-level decomposition over the doubling base, where the section is the whole base.

    With ``m'`` and ``chi'`` the decomposition of the lap integral ``v_X``,
    ``chi(y, u) = chi'(y) + int_0^u v(y, s) ds`` and ``m(y, u)`` equals
    ``m'(y)`` on the top unit strip ``r(y) - 1 <= u < r(y)`` and vanishes
    below it. The time-one integral ``psi = int_0^1 v o F_s ds`` then splits
    as ``m + chi o F_1 - chi``.
    """

    flow: "SuspensionFlow"
    v: "FlowObservable"
    base: Decomposition
    mean_roof: float
    dt: float

    @property
    def sigma(self) -> np.ndarray:
        return self.base.sigma / self.mean_roof

    def _partial(self, y, u) -> np.ndarray:
        from .suspension import _segment_integrals

        return _segment_integrals(self.v, y, np.zeros_like(u), u, self.dt)

    def chi(self, y, u) -> np.ndarray:
        y = np.asarray(y, float)
        u = np.asarray(u, float)
        return self.base.chi(y) + self._partial(y, u)

    def m_prime(self, y) -> np.ndarray:
        from .suspension import induced_observable

        y = np.asarray(y, float)
        fy = step(self.flow.base, y)
        return _column(induced_observable(self.flow, self.v, y, self.dt)) - self.base.chi(fy) + self.base.chi(y)

    def m(self, y, u) -> np.ndarray:
        y = np.asarray(y, float)
        u = np.asarray(u, float)
        top = (u >= self.flow.roof(y) - 1.0)[..., None]
        return np.where(top, self.m_prime(y), 0.0)

    def time_one_map(self, y, u):
        y = np.asarray(y, float)
        u = np.asarray(u, float)
        r = self.flow.roof(y)
        wrap = u + 1.0 >= r
        return np.where(wrap, step(self.flow.base, y), y), np.where(wrap, u + 1.0 - r, u + 1.0)

    def psi(self, y, u) -> np.ndarray:
        """int_0^1 v(F_s(y, u)) ds for arrays of points."""
        from .suspension import cumulative_integrals

        y = np.atleast_1d(np.asarray(y, float))
        u = np.atleast_1d(np.asarray(u, float))
        orbits = np.stack([y, step(self.flow.base, y), step(self.flow.base, step(self.flow.base, y))], axis=1)
        return cumulative_integrals(self.flow, self.v, orbits, u, np.array([1.0]), self.dt)[:, 0]


def flow_decomposition(flow, v, grid_size: int = 4096, dt: Optional[float] = None, tol: float = 1e-10):
    """Decompose a mean-zero flow observable over the doubling base (requires ``inf r >= 1``)."""
    from .suspension import DEFAULT_DT, induced_observable

    if flow.base.kind != "doubling":
        raise ContractError("the explicit flow decomposition is available over the doubling base only")
    dt = DEFAULT_DT if dt is None else dt
    op = ExactDoubling(grid_size, periodic=False)
    dec = primary_decomposition(op, lambda x: induced_observable(flow, v, x, dt), tol=tol)
    nodes, weights = np.polynomial.legendre.leggauss(64)
    mean_roof = float(0.5 * weights @ flow.roof(0.5 * (nodes + 1.0)))
    return FlowDecomposition(flow, v, dec, mean_roof, dt)

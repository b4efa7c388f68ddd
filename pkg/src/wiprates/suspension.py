"""Suspension semiflows over an interval map.

A point of the suspension is a pair ``(x, u)`` with ``0 <= u < r(x)``. The
flow moves ``u`` upward at unit speed, and the top ``(x, r(x))`` is glued to
``(T x, 0)``. Time integrals of an observable along the flow are split at
these gluing times and each lap segment is integrated by composite Simpson.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynsys import ContractError, InducedMap, MapSystem, OrbitSampler, step

__all__ = [
    "RoofFunction",
    "SuspensionFlow",
    "FlowObservable",
    "lap_number",
    "flow_point",
    "flow_integral",
    "induced_observable",
    "induced_roof",
    "observable_mean",
    "sample_flow_starts",
    "cumulative_integrals",
    "testbed_flow",
    "testbed_observable",
    "DEFAULT_DT",
]

DEFAULT_DT = 1.0 / 64


@dataclass(frozen=True)
class RoofFunction:
    """Roof ``r: [0, 1] -> [1, inf)``.

    Either affine, ``r(x) = a + b x``, or tabulated on a uniform grid of
    [0, 1] (endpoints included) with linear interpolation.
    """

    form: str = "affine"
    a: float = 1.0
    b: float = 0.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.form == "affine":
            lo = min(self.a, self.a + self.b)
        elif self.form == "custom":
            if self.table is None or len(self.table) < 2:
                raise ContractError("a tabulated roof needs at least two values")
            lo = min(self.table)
        else:
            raise ContractError(f"unknown roof form {self.form!r}")
        if lo < 1.0:
            raise ContractError(f"roof must be bounded below by 1, got inf r = {lo}")

    @classmethod
    def affine(cls, a: float, b: float = 0.0) -> "RoofFunction":
        return cls("affine", float(a), float(b))

    @classmethod
    def tabulated(cls, values) -> "RoofFunction":
        return cls("custom", table=tuple(float(v) for v in values))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.form == "affine":
            return self.a + self.b * x
        tab = np.asarray(self.table)
        return np.interp(x, np.linspace(0.0, 1.0, tab.size), tab)

    @property
    def r_min(self) -> float:
        if self.form == "affine":
            return min(self.a, self.a + self.b)
        return min(self.table)

    @property
    def r_max(self) -> float:
        if self.form == "affine":
            return max(self.a, self.a + self.b)
        return max(self.table)

    def describe(self) -> dict:
        if self.form == "affine":
            return {"form": "affine", "a": self.a, "b": self.b}
        return {"form": "custom", "table": list(self.table)}


@dataclass(frozen=True)
class SuspensionFlow:
    base: MapSystem
    roof: RoofFunction

    def describe(self) -> dict:
        return {"base": self.base.describe(), "roof": self.roof.describe()}


@dataclass(frozen=True)
class FlowObservable:
    """Observable ``v(x, u)`` on the suspension with values in R^dim.

    ``evaluator`` must broadcast over arrays; it may return either the
    broadcast shape (``dim == 1``) or the broadcast shape plus a trailing
    axis of length ``dim``.
    """

    evaluator: Callable
    dim: int = 1
    declared_mean_zero: bool = False
    name: str = "v"

    def __call__(self, x, u) -> np.ndarray:
        x, u = np.broadcast_arrays(np.asarray(x, float), np.asarray(u, float))
        out = np.asarray(self.evaluator(x, u), dtype=float)
        if out.shape == x.shape:
            out = out[..., None]
        if out.shape != x.shape + (self.dim,):
            out = np.broadcast_to(out, x.shape + (self.dim,))
        return out


def _check_start(flow: SuspensionFlow, start):
    x, u = float(start[0]), float(start[1])
    if not 0.0 <= x <= 1.0:
        raise ContractError("base point outside [0, 1]")
    if not 0.0 <= u < float(flow.roof(x)):
        raise ContractError("height outside [0, r(x))")
    return x, u


def lap_number(flow: SuspensionFlow, start, t: float) -> int:
    """Number N of roof crossings: r_N(x) <= t + u < r_{N+1}(x)."""
    x, u = _check_start(flow, start)
    if t < 0:
        raise ContractError("time must be nonnegative")
    target = t + u
    laps, acc = 0, 0.0
    while True:
        nxt = acc + float(flow.roof(x))
        if nxt > target:
            return laps
        acc = nxt
        x = step(flow.base, x)
        laps += 1


def flow_point(flow: SuspensionFlow, start, t: float):
    """Image of ``(x, u)`` under the flow for time ``t >= 0``."""
    x, u = _check_start(flow, start)
    if t < 0:
        raise ContractError("time must be nonnegative")
    target = t + u
    acc = 0.0
    while True:
        r = float(flow.roof(x))
        if acc + r > target:
            return x, target - acc
        acc += r
        x = step(flow.base, x)


def _simpson_nodes(length: float, dt: float) -> int:
    return max(2, 2 * math.ceil(length / (2.0 * dt)))


def _segment_integrals(v: FlowObservable, x, a, b, dt: float) -> np.ndarray:
    """Simpson integrals of s -> v(x, s) over [a, b], vectorized over segments.

    All segments in the batch share the panel count set by the longest one,
    so every panel is at most ``dt`` wide.
    """
    x = np.asarray(x, float)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    width = b - a
    longest = float(width.max()) if width.size else 0.0
    k = _simpson_nodes(longest, dt)
    w = np.ones(k + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    frac = np.linspace(0.0, 1.0, k + 1)
    out = np.zeros(x.shape + (v.dim,))
    # chunk to bound memory at roughly 4M evaluations
    flat_x, flat_a, flat_w = x.ravel(), a.ravel(), width.ravel()
    flat_out = out.reshape(-1, v.dim)
    chunk = max(1, 4_000_000 // (k + 1))
    for lo in range(0, flat_x.size, chunk):
        sl = slice(lo, lo + chunk)
        s = flat_a[sl, None] + flat_w[sl, None] * frac[None, :]
        vals = v(np.broadcast_to(flat_x[sl, None], s.shape), s)
        flat_out[sl] = np.einsum("ikd,k->id", vals, w) * (flat_w[sl, None] / (3.0 * k))
    return out


def induced_observable(flow: SuspensionFlow, v: FlowObservable, x, dt: float = DEFAULT_DT):
    """v_X(x): integral of v over one full lap started at (x, 0)."""
    x = np.asarray(x, float)
    out = _segment_integrals(v, x, np.zeros_like(x), flow.roof(x), dt)
    return out[()] if x.ndim else out


def cumulative_integrals(
    flow: SuspensionFlow,
    v: FlowObservable,
    orbits: np.ndarray,
    heights: np.ndarray,
    times: np.ndarray,
    dt: float = DEFAULT_DT,
) -> np.ndarray:
    """Integrals of ``v`` along the flow from ``(orbits[:, 0], heights)`` up to each time.

    ``orbits`` has shape (W, L) and holds base orbits; ``times`` is a sorted
    array of nonnegative times. Returns shape (W, len(times), dim). Raises
    ContractError when an orbit is too short to cover the largest time.
    """
    orbits = np.atleast_2d(np.asarray(orbits, float))
    heights = np.atleast_1d(np.asarray(heights, float))
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ContractError("times must be sorted and nonnegative")
    n_walkers, length = orbits.shape
    roofs = flow.roof(orbits)
    if np.any(heights < 0) or np.any(heights >= roofs[:, 0]):
        raise ContractError("height outside [0, r(x))")
    # lap k (k >= 1) starts at time starts[:, k]
    starts = np.concatenate(
        [np.zeros((n_walkers, 1)), np.cumsum(roofs, axis=1) - heights[:, None]], axis=1
    )
    if np.any(starts[:, -1] <= times[-1]):
        raise ContractError("base orbit too short for the requested time span")

    laps = np.empty((n_walkers, times.size), dtype=np.int64)
    for w in range(n_walkers):
        laps[w] = np.searchsorted(starts[w, 1:], times, side="right")
    max_lap = int(laps.max())

    full = np.zeros((n_walkers, max_lap + 1, v.dim))
    if max_lap >= 1:
        xs = orbits[:, 1 : max_lap + 1]
        full[:, 1:] = _segment_integrals(v, xs, np.zeros_like(xs), roofs[:, 1 : max_lap + 1], dt)
    first_end = np.minimum(roofs[:, 0:1], heights[:, None] + times[None, :])
    first = _segment_integrals(
        v,
        np.broadcast_to(orbits[:, 0:1], first_end.shape),
        np.broadcast_to(heights[:, None], first_end.shape),
        first_end,
        dt,
    )
    # sums of full laps 1..N-1, then the partial lap N
    prefix = np.cumsum(full, axis=1)
    rows = np.arange(n_walkers)[:, None]
    done = np.where(laps[..., None] >= 2, prefix[rows, np.maximum(laps - 1, 0)], 0.0)
    cur_x = orbits[rows, laps]
    cur_top = np.where(laps >= 1, times[None, :] - starts[rows, laps], 0.0)
    partial = _segment_integrals(v, cur_x, np.zeros_like(cur_top), cur_top, dt)
    partial = np.where(laps[..., None] >= 1, partial, 0.0)
    return first + done + partial


def _orbit_for_span(flow: SuspensionFlow, x: float, span: float) -> np.ndarray:
    laps = int(math.ceil(span / flow.roof.r_min)) + 2
    xs = np.empty(laps)
    for k in range(laps):
        xs[k] = x
        x = step(flow.base, x)
    return xs


def flow_integral(
    flow: SuspensionFlow,
    v: FlowObservable,
    start,
    t_end: float,
    dt: float = DEFAULT_DT,
    orbit: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Integral of ``v`` along the flow from ``start`` over [0, t_end].

    The base orbit is iterated from ``start[0]`` unless ``orbit`` supplies it
    (needed for the doubling base beyond about 50 laps, where floating-point
    iteration degenerates).
    """
    if dt <= 0:
        raise ContractError("quadrature step must be positive")
    x, u = _check_start(flow, start)
    if orbit is None:
        orbit = _orbit_for_span(flow, x, t_end + u)
    return cumulative_integrals(flow, v, orbit[None, :], np.array([u]), np.array([float(t_end)]), dt)[0, 0]


def induced_roof(flow: SuspensionFlow, induced: InducedMap, y) -> np.ndarray:
    """phi(y) = sum_{j < tau(y)} r(T^j y) over the first-return excursion."""
    y = np.atleast_1d(np.asarray(y, float))
    tau, _ = induced.first_return(y)
    phi = np.zeros(y.shape)
    x = y.copy()
    for j in range(int(tau.max())):
        live = j < tau
        phi[live] += flow.roof(x[live])
        x[live] = step(flow.base, x[live])
    return phi


def observable_mean(
    flow: SuspensionFlow,
    v: FlowObservable,
    dt: float = DEFAULT_DT,
    sampler: Optional[OrbitSampler] = None,
    orbit_points: int = 10_000_000,
) -> np.ndarray:
    """Mean of ``v`` under the flow-invariant measure.

    For the doubling base the invariant measure of the base is Lebesgue and
    the mean is computed by Gauss-Legendre quadrature. Other bases use
    ``orbit_points`` points from ``sampler`` (spread over 1000 walkers).
    """
    if flow.base.kind == "doubling":
        nodes, weights = np.polynomial.legendre.leggauss(128)
        x = 0.5 * (nodes + 1.0)
        vx = induced_observable(flow, v, x, dt)
        num = 0.5 * weights @ vx
        den = 0.5 * weights @ flow.roof(x)
        return num / den
    if sampler is None:
        raise ContractError("a sampler is required to estimate means on this base")
    walkers = 1000
    xs = sampler.orbits(walkers, max(1, orbit_points // walkers)).ravel()
    return induced_observable(flow, v, xs, dt).mean(axis=0) / flow.roof(xs).mean()


def sample_flow_starts(flow: SuspensionFlow, sampler: OrbitSampler, count: int, laps: int):
    """Starts drawn from the flow-invariant measure with their base orbits.

    The base point is drawn from the base invariant measure reweighted by
    r / max r and the height uniformly on [0, r(x)). Returns (orbits, heights)
    with orbits of shape (count, laps).
    """
    r_max = flow.roof.r_max
    orbits = sampler.orbits(count, laps, start_weight=lambda x: flow.roof(x) / r_max)
    heights = sampler.rng.random(count) * flow.roof(orbits[:, 0])
    return orbits, heights


def testbed_flow() -> SuspensionFlow:
    """Doubling base with roof r(x) = 1 + x/2."""
    return SuspensionFlow(MapSystem.doubling(), RoofFunction.affine(1.0, 0.5))


def _cos_base(x, u):
    return np.cos(2.0 * np.pi * x)


def testbed_observable() -> FlowObservable:
    """v(x, u) = cos(2 pi x); mean zero since the integral of cos(2 pi x)(1 + x/2) over [0, 1] vanishes."""
    return FlowObservable(_cos_base, dim=1, declared_mean_zero=True, name="cos(2 pi x)")

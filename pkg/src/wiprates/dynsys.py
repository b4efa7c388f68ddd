"""Interval maps: the doubling map, the LSV intermittent map and its first-return map.

Orbits of the doubling map are generated from an i.i.d. bit stream instead of
iterating ``2x mod 1`` in floating point, which would collapse every orbit to 0
after about 53 steps. A window of 53 consecutive bits is exactly the double
nearest below the true orbit point, so the generated orbits have the law of a
Lebesgue-distributed start to full double precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ContractError",
    "ReturnOverflow",
    "MapSystem",
    "OrbitSampler",
    "InducedMap",
    "RNG_ALGORITHM",
    "make_rng",
    "step",
    "sample_orbit",
    "return_time",
]

RNG_ALGORITHM = "numpy.random.Generator(PCG64), seeded via SeedSequence"

_MANTISSA_BITS = 53
_BIT_WEIGHTS = np.ldexp(1.0, -np.arange(1, _MANTISSA_BITS + 1))


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class ReturnOverflow(RuntimeError):
    """No return to the inducing set within the configured cutoff."""


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass(frozen=True)
class MapSystem:
    """A map of the unit interval.

    ``kind`` is ``"doubling"`` or ``"lsv"``. For the LSV map ``gamma`` must lie
    in [0, 1); ``gamma = 0`` reproduces the doubling map branch by branch.
    """

    kind: str
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("doubling", "lsv"):
            raise ContractError(f"unknown map kind {self.kind!r}")
        if self.kind == "lsv" and not 0.0 <= self.gamma < 1.0:
            raise ContractError(f"LSV parameter gamma={self.gamma} outside [0, 1)")

    @classmethod
    def doubling(cls) -> "MapSystem":
        return cls("doubling")

    @classmethod
    def lsv(cls, gamma: float) -> "MapSystem":
        return cls("lsv", float(gamma))

    def __call__(self, x):
        return step(self, x)

    def describe(self) -> dict:
        if self.kind == "doubling":
            return {"kind": "doubling"}
        return {"kind": "lsv", "gamma": self.gamma}


def _check_unit(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)) or np.any(arr > 1.0):
        raise ContractError("point outside [0, 1]")
    return arr


def _apply(system: MapSystem, x: np.ndarray) -> np.ndarray:
    if system.kind == "doubling":
        return np.mod(2.0 * x, 1.0)
    g = system.gamma
    lower = x * (1.0 + 2.0**g * x**g)
    return np.where(x < 0.5, lower, 2.0 * x - 1.0)


def step(system: MapSystem, x):
    """Apply the map once. Accepts a scalar or an array of points in [0, 1]."""
    arr = _check_unit(x)
    out = _apply(system, arr)
    if np.ndim(x) == 0:
        return float(out)
    return out


def _bits_to_points(bits: np.ndarray, length: int) -> np.ndarray:
    # bits has shape (count, length + 52); point j reads bits j..j+52
    x = np.zeros((bits.shape[0], length))
    for k in range(_MANTISSA_BITS):
        x += bits[:, k : k + length] * _BIT_WEIGHTS[k]
    return x


@dataclass
class OrbitSampler:
    """Draws orbits started from the invariant measure of ``system``.

    A start is drawn uniformly on [0, 1] and ``burn_in`` iterates are
    discarded. For the doubling map Lebesgue measure is already invariant,
    so the burn-in is skipped without changing the law of the orbit.

    ``seed`` fixes the stream completely: two samplers with equal seeds and
    parameters produce bit-identical orbits.
    """

    system: MapSystem
    burn_in: int = 10_000
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.burn_in < 0:
            raise ContractError("burn_in must be nonnegative")
        self._rng = make_rng(self.seed)

    @property
    def rng(self) -> np.random.Generator:
        return self._rng

    def orbits(
        self,
        count: int,
        length: int,
        start_weight: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ) -> np.ndarray:
        """Return ``count`` independent orbits of ``length`` points, shape (count, length).

        ``start_weight`` optionally maps start points to acceptance
        probabilities in [0, 1]; the start is then drawn from the invariant
        measure reweighted by it (rejection sampling).
        """
        if count < 1 or length < 1:
            raise ContractError("count and length must be at least 1")
        if self.system.kind == "doubling":
            return self._doubling_orbits(count, length, start_weight)
        return self._float_orbits(count, length, start_weight)

    def _doubling_orbits(self, count, length, start_weight):
        rng = self._rng
        heads = np.empty((0, _MANTISSA_BITS), dtype=np.uint8)
        while heads.shape[0] < count:
            need = count - heads.shape[0]
            cand = rng.integers(0, 2, size=(need, _MANTISSA_BITS), dtype=np.uint8)
            if start_weight is not None:
                x0 = cand @ _BIT_WEIGHTS
                keep = rng.random(need) < start_weight(x0)
                cand = cand[keep]
            heads = np.concatenate([heads, cand])
        tail = rng.integers(0, 2, size=(count, length - 1), dtype=np.uint8)
        return _bits_to_points(np.concatenate([heads, tail], axis=1), length)

    def _float_orbits(self, count, length, start_weight):
        rng = self._rng
        starts = np.empty(0)
        while starts.size < count:
            need = count - starts.size
            x = rng.random(need)
            for _ in range(self.burn_in):
                x = _apply(self.system, x)
            if start_weight is not None:
                x = x[rng.random(need) < start_weight(x)]
            starts = np.concatenate([starts, x])
        out = np.empty((count, length))
        x = starts
        for j in range(length):
            out[:, j] = x
            x = _apply(self.system, x)
        return out


def sample_orbit(sampler: OrbitSampler, length: int) -> np.ndarray:
    """One orbit (x0, T x0, ..., T^(length-1) x0) from the invariant measure."""
    return sampler.orbits(1, length)[0]


@dataclass(frozen=True)
class InducedMap:
    """First-return map of the LSV map to Y = (1/2, 1]."""

    base: MapSystem
    max_return: int = 1_000_000

    def __post_init__(self):
        if self.base.kind != "lsv":
            raise ContractError("the induced map is defined over the LSV map")

    def first_return(self, y):
        """Return (tau, F y) for an array of points of Y."""
        y = _check_unit(y)
        if np.any(y <= 0.5):
            raise ContractError("point outside Y = (1/2, 1]")
        tau = np.zeros(y.shape, dtype=np.int64)
        x = y.copy()
        active = np.ones(y.shape, dtype=bool)
        n = 0
        while active.any():
            if n >= self.max_return:
                raise ReturnOverflow(
                    f"no return to Y within {self.max_return} iterates"
                )
            n += 1
            x[active] = _apply(self.base, x[active])
            back = active & (x > 0.5)
            tau[back] = n
            active &= ~back
        return tau, x

    def __call__(self, y):
        return self.first_return(y)[1]

    def orbit(self, y0, length: int):
        """Induced orbits y0, F y0, ... with the return times along them.

        ``y0`` may be a scalar or an array of starts; outputs have shape
        ``np.shape(y0) + (length,)``.
        """
        y = np.array(y0, dtype=float, ndmin=1)
        ys = np.empty(y.shape + (length,))
        taus = np.empty(y.shape + (length,), dtype=np.int64)
        for i in range(length):
            ys[..., i] = y
            taus[..., i], y = self.first_return(y)
        if np.ndim(y0) == 0:
            return ys[0], taus[0]
        return ys, taus


def return_time(induced: InducedMap, y: float) -> int:
    """Smallest n >= 1 with T^n y in (1/2, 1]."""
    tau, _ = induced.first_return(np.asarray([y], dtype=float))
    return int(tau[0])

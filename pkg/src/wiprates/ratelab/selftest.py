"""Quick oracle checks runnable from the command line."""

from __future__ import annotations

import sys
from typing import Callable, List, Tuple

import numpy as np

from ..decomp import ExactDoubling, TrigPoly, primary_decomposition
from ..dynsys import make_rng
from ..otmetrics import brute_prokhorov, brute_wasserstein1, prokhorov_cost, wasserstein1_cost
from ..pathspace import PiecewisePath, h_reversal
from ..suspension import lap_number, testbed_flow


def _w1(rng) -> bool:
    for _ in range(50):
        m = int(rng.integers(1, 7))
        c = rng.random((m, m))
        if abs(wasserstein1_cost(c) - brute_wasserstein1(c)) > 1e-10:
            return False
    return True


def _pi(rng) -> bool:
    for _ in range(50):
        m = int(rng.integers(1, 9))
        c = np.round(rng.random((m, m)), int(rng.integers(1, 4)))
        if prokhorov_cost(c) != brute_prokhorov(c):
            return False
    return True


def _decomposition(rng) -> bool:
    dec = primary_decomposition(ExactDoubling(), TrigPoly.cos(2))
    x = rng.random(100)
    chi_ok = np.allclose(dec.chi(x)[:, 0], np.cos(2 * np.pi * x), atol=1e-12)
    return chi_ok and dec.residual < 1e-10 and abs(dec.sigma[0, 0] - 0.5) < 1e-6


def _laps(rng) -> bool:
    return lap_number(testbed_flow(), (0.0, 0.0), 2.5) == 2


def _reversal(rng) -> bool:
    for _ in range(20):
        k = int(rng.integers(2, 30))
        nodes = np.concatenate([[0.0], np.sort(rng.random(k - 2)), [1.0]])
        vals = np.concatenate([[0.0], rng.standard_normal(k - 1)])
        p = PiecewisePath(np.unique(nodes), vals[: np.unique(nodes).size])
        back = h_reversal(h_reversal(p))
        if np.max(np.abs(back(p.nodes) - p.values)) > 1e-12:
            return False
    return True


CHECKS: List[Tuple[str, Callable]] = [
    ("W1 assignment vs permutation enumeration", _w1),
    ("Prokhorov matching vs subset enumeration", _pi),
    ("doubling decomposition of cos(4 pi x)", _decomposition),
    ("lap number on the testbed flow", _laps),
    ("h-reversal is an involution", _reversal),
]


def run_selftest(seed: int = 0, stream=sys.stdout) -> bool:
    rng = make_rng(seed)
    ok = True
    for name, check in CHECKS:
        passed = bool(check(rng))
        ok &= passed
        stream.write(f"{'PASS' if passed else 'FAIL'} {name}\n")
    return ok

"""Exhaustive reference implementations, usable only for a handful of atoms."""

from __future__ import annotations

import itertools

import numpy as np

from .metrics import prokhorov_candidates

__all__ = ["brute_wasserstein1", "brute_prokhorov"]


def brute_wasserstein1(cost) -> float:
    """Minimum over all M! permutations of the mean matched cost."""
    cost = np.asarray(cost, float)
    m = cost.shape[0]
    if m > 8:
        raise ValueError("factorial enumeration is limited to 8 atoms")
    perms = np.array(list(itertools.permutations(range(m))), dtype=np.int64)
    totals = cost[np.arange(m), perms].sum(axis=1)
    return float(totals.min() / m)


def brute_prokhorov(cost) -> float:
    """Smallest candidate eps with |B| / M <= |N_eps(B)| / M + eps for every subset B.

    N_eps(B) collects the atoms of nu within distance eps of some atom of B.
    Subsets are bitmasks and neighbourhoods are unions of row bitmasks.
    """
    cost = np.asarray(cost, float)
    m = cost.shape[0]
    if m > 16:
        raise ValueError("subset enumeration is limited to 16 atoms")
    subsets = np.arange(1 << m, dtype=np.int64)
    members = (subsets[:, None] >> np.arange(m)) & 1
    sizes = members.sum(axis=1)
    bit = 1 << np.arange(m, dtype=np.int64)
    for eps in prokhorov_candidates(cost):
        rows = ((cost <= eps) * bit).sum(axis=1)  # neighbourhood bitmask of each atom
        neigh = np.zeros_like(subsets)
        for i in range(m):
            neigh |= np.where(members[:, i] == 1, rows[i], 0)
        counts = ((neigh[:, None] >> np.arange(m)) & 1).sum(axis=1)
        if np.all(eps >= (sizes - counts) / m):
            return float(eps)
    raise AssertionError("eps = 1 is always feasible")

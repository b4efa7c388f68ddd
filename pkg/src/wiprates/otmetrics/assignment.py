"""Dense min-cost perfect assignment by shortest augmenting paths.

Rows are inserted one at a time; each insertion runs a Dijkstra-type search
over reduced costs, with dual potentials kept feasible throughout. Each
search is vectorised over the columns, so a dense M x M solve costs O(M^3)
flops but only O(M^2) Python-level steps in the worst case.
"""

from __future__ import annotations

import numpy as np

__all__ = ["solve_assignment", "assignment_cost"]


def solve_assignment(cost) -> np.ndarray:
    """Column assigned to each row in a minimum-cost perfect matching.

    Ties are resolved towards the lowest column index, so the output is a
    deterministic function of the cost matrix.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("assignment needs a square cost matrix")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)

    # index 0 is a virtual column used as the root of each search
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j] = row (1-based) on column j
    way = np.zeros(n + 1, dtype=np.int64)
    padded = np.zeros((n + 1, n + 1))
    padded[1:, 1:] = c

    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            reduced = padded[i0] - u[i0] - v
            better = free & (reduced < minv)
            minv[better] = reduced[better]
            way[better] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    rows = np.empty(n, dtype=np.int64)
    rows[owner[1:] - 1] = np.arange(n)
    return rows


def assignment_cost(cost) -> float:
    """Minimum of sum_i cost[i, pi(i)] over permutations pi."""
    c = np.asarray(cost, dtype=float)
    cols = solve_assignment(c)
    return float(c[np.arange(c.shape[0]), cols].sum())

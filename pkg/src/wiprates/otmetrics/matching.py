"""Hopcroft-Karp maximum bipartite matching on a boolean adjacency matrix."""

from __future__ import annotations

from collections import deque

import numpy as np

__all__ = ["max_matching"]

_FREE = -1


def max_matching(adj) -> int:
    """Size of a maximum matching; ``adj[i, j]`` is True when left i may pair with right j."""
    adj = np.asarray(adj, dtype=bool)
    n_left, n_right = adj.shape
    neighbours = [np.flatnonzero(row).tolist() for row in adj]
    match_l = [_FREE] * n_left
    match_r = [_FREE] * n_right
    size = 0
    inf = n_left + n_right + 1

    while True:
        # BFS from all free left vertices, layering by alternating path length
        dist = [inf] * n_left
        queue = deque()
        for i in range(n_left):
            if match_l[i] == _FREE:
                dist[i] = 0
                queue.append(i)
        reachable_free = inf
        while queue:
            i = queue.popleft()
            if dist[i] >= reachable_free:
                continue
            for j in neighbours[i]:
                k = match_r[j]
                if k == _FREE:
                    reachable_free = min(reachable_free, dist[i] + 1)
                elif dist[k] == inf:
                    dist[k] = dist[i] + 1
                    queue.append(k)
        if reachable_free == inf:
            return size

        # vertex-disjoint shortest augmenting paths by iterative DFS
        cursor = [0] * n_left
        for root in range(n_left):
            if match_l[root] != _FREE:
                continue
            stack = [root]
            found = False
            while stack:
                i = stack[-1]
                nbrs = neighbours[i]
                advanced = False
                while cursor[i] < len(nbrs):
                    j = nbrs[cursor[i]]
                    cursor[i] += 1
                    k = match_r[j]
                    if k == _FREE:
                        if dist[i] + 1 == reachable_free:
                            found = True
                            break
                    elif dist[k] == dist[i] + 1:
                        stack.append(k)
                        advanced = True
                        break
                if found:
                    break
                if not advanced:
                    dist[i] = inf
                    stack.pop()
            if found:
                # walk back up the stack flipping edges; cursor - 1 is the edge taken
                for i in reversed(stack):
                    j = neighbours[i][cursor[i] - 1]
                    match_r[j] = i
                    match_l[i] = j
                size += 1

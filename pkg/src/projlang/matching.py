"""Minimum-cost bipartite assignment and the chunk matching cost."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedding import Provider, cosine_distance

UNMATCHED_PENALTY = 1.0


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def _solve_square(cost: np.ndarray) -> list[int]:
    """Shortest augmenting path Hungarian method with potentials, O(n^3).

    Returns ``assign`` with ``assign[row] = col``.
    """
    n = cost.shape[0]
    a = cost.tolist()
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    owner = [0] * (n + 1)  # owner[col] = row (1-based), 0 = free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = owner[j0]
            row = a[i0 - 1]
            delta, j1 = inf, 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = row[j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta, j1 = minv[j], j
            for j in range(n + 1):
                if used[j]:
                    u[owner[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    assign = [0] * n
    for j in range(1, n + 1):
        assign[owner[j] - 1] = j - 1
    return assign


def _optimum(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Optimal pairs of a rectangular matrix via zero-padding to a square."""
    n, m = cost.shape
    if n == 0 or m == 0:
        return [], 0.0
    size = max(n, m)
    padded = np.zeros((size, size))
    padded[:n, :m] = cost
    assign = _solve_square(padded)
    pairs = [(r, assign[r]) for r in range(n) if assign[r] < m]
    return pairs, _total(cost, pairs)


def _total(cost: np.ndarray, pairs) -> float:
    total = 0.0
    for r, c in sorted(pairs):
        total += float(cost[r, c])
    return total


def hungarian(cost) -> Matching:
    """Minimum-cost matching of size ``min(n, m)``.

    Among optimal matchings the lexicographically smallest (row-sorted) pair
    list is returned, so results do not depend on solver internals.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2 or c.size == 0:
        raise ValueError("cost matrix must be a non-empty 2-d array")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n, m = c.shape
    _, best = _optimum(c)
    tol = 1e-9 * max(1.0, float(np.abs(c).sum()))
    target = min(n, m)
    fixed: list[tuple[int, int]] = []
    fixed_cost = 0.0
    last_row = -1
    used_cols: set[int] = set()
    while len(fixed) < target:
        need = target - len(fixed) - 1
        for r in range(last_row + 1, n):
            found = False
            for col in range(m):
                if col in used_cols:
                    continue
                rows = list(range(r + 1, n))
                cols = [j for j in range(m) if j not in used_cols and j != col]
                if min(len(rows), len(cols)) != need:
                    continue
                _, rest = _optimum(c[np.ix_(rows, cols)]) if need else ([], 0.0)
                if fixed_cost + c[r, col] + rest <= best + tol:
                    fixed.append((r, col))
                    fixed_cost += float(c[r, col])
                    used_cols.add(col)
                    last_row = r
                    found = True
                    break
            if found:
                break
        else:  # numerical corner: fall back to the plain optimum
            pairs, _ = _optimum(c)
            return Matching(tuple(sorted(pairs)), _total(c, pairs))
    return Matching(tuple(fixed), _total(c, fixed))


def _chunk_tokens(chunk) -> Sequence[str]:
    tokens = getattr(chunk, "tokens", chunk)
    return tokens.split() if isinstance(tokens, str) else tokens


def chunk_match_cost(x_chunks, synth_chunks, provider: Provider,
                     penalty: float = UNMATCHED_PENALTY) -> tuple[float, Matching]:
    """Optimal chunk alignment cost plus ``penalty`` per unmatched chunk."""
    xs = [provider.embed(_chunk_tokens(c)) for c in x_chunks]
    ys = [provider.embed(_chunk_tokens(c)) for c in synth_chunks]
    unmatched = penalty * abs(len(xs) - len(ys))
    if not xs or not ys:
        return unmatched, Matching((), 0.0)
    cost = np.array([[cosine_distance(a, b) for b in ys] for a in xs])
    matching = hungarian(cost)
    return matching.total_cost + unmatched, matching

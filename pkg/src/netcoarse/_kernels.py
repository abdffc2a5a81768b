"""Numba kernels for the hot loops.

All kernels operate on preallocated buffers (adjacency matrix, edge stack,
edge position matrix). The trajectory kernels take an explicit
np.random.Generator so public evolution APIs share numpy seeding
semantics; the coarse-timestepper kernel instead loops all ensemble
copies in one call on numba's internal RNG, reseeded per copy from a
caller-supplied seed array, which removes per-copy dispatch overhead
while keeping runs reproducible and copy-wise coupled across nearby
input distributions (common random numbers via inverse-transform
sampling). The edge stack uses swap-remove, giving O(1) uniform edge
removal.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = [
    "evolve_chain",
    "havel_hakimi_fill",
    "sample_graphical_sequence",
    "phi_ensemble",
]


@njit(cache=True)
def evolve_chain(adj, edge_stack, edge_pos, m, iters, r, rng):
    """Run `iters` iterations of the chain in place; returns new edge count.

    One iteration: draw an unordered pair of distinct vertices uniformly and
    add the edge if absent; then with probability r remove an edge drawn
    uniformly from the current (post-addition) edge set.
    """
    n = adj.shape[0]
    for _ in range(iters):
        u = rng.integers(0, n)
        v = rng.integers(0, n - 1)
        if v >= u:
            v += 1
        if not adj[u, v]:
            adj[u, v] = True
            adj[v, u] = True
            edge_stack[m, 0] = u
            edge_stack[m, 1] = v
            edge_pos[u, v] = m
            edge_pos[v, u] = m
            m += 1
        if rng.random() < r and m > 0:
            k = rng.integers(0, m)
            a = edge_stack[k, 0]
            b = edge_stack[k, 1]
            adj[a, b] = False
            adj[b, a] = False
            edge_pos[a, b] = -1
            edge_pos[b, a] = -1
            m -= 1
            if k != m:
                c = edge_stack[m, 0]
                d = edge_stack[m, 1]
                edge_stack[k, 0] = c
                edge_stack[k, 1] = d
                edge_pos[c, d] = k
                edge_pos[d, c] = k
    return m


@njit(cache=True)
def _sort_by_residual(resid, counts, order):
    """Counting sort: residual degree descending, vertex index ascending."""
    n = resid.shape[0]
    counts[:] = 0
    for i in range(n):
        counts[resid[i]] += 1
    # prefix offsets for descending degree buckets
    total = 0
    for d in range(n - 1, -1, -1):
        c = counts[d]
        counts[d] = total
        total += c
    for i in range(n):
        d = resid[i]
        order[counts[d]] = i
        counts[d] += 1


@njit(cache=True)
def havel_hakimi_fill(degrees, adj, edge_stack, edge_pos):
    """Realize a degree sequence in place; returns edge count, or -1 if the
    sequence is not graphical.

    Classic scheme: repeatedly connect the vertex of largest residual degree
    to the next-largest ones. Ties break by ascending vertex index, so the
    construction is deterministic.
    """
    n = degrees.shape[0]
    total = 0
    for i in range(n):
        d = degrees[i]
        if d < 0 or d >= n:
            return -1
        total += d
    if total % 2 == 1:
        return -1

    adj[:, :] = False
    edge_pos[:, :] = -1
    resid = degrees.astype(np.int64)
    counts = np.empty(n, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    m = 0
    for _ in range(n + 1):
        _sort_by_residual(resid, counts, order)
        v = order[0]
        k = resid[v]
        if k == 0:
            return m
        for j in range(1, k + 1):
            u = order[j]
            if resid[u] <= 0:
                return -1
            adj[v, u] = True
            adj[u, v] = True
            edge_stack[m, 0] = v
            edge_stack[m, 1] = u
            edge_pos[v, u] = m
            edge_pos[u, v] = m
            m += 1
            resid[u] -= 1
        resid[v] = 0
    return m


@njit(cache=True)
def sample_graphical_sequence(cdf, n, budget, rng, adj, edge_stack, edge_pos):
    """Draw degree sequences from the distribution with cumulative `cdf`
    until one is graphical, realizing it into the buffers via Havel-Hakimi.

    Returns (edge count, retries); edge count is -1 if the budget ran out.
    Degrees are drawn by inverse transform, so two calls with generators in
    identical states and nearby cdfs produce mostly identical sequences
    (common-random-numbers coupling).
    """
    degrees = np.empty(n, dtype=np.int64)
    for attempt in range(budget):
        total = 0
        for i in range(n):
            p = rng.random()
            d = np.searchsorted(cdf, p, side="right")
            if d >= cdf.shape[0]:
                d = cdf.shape[0] - 1
            degrees[i] = d
            total += d
        if total % 2 == 1:
            continue
        m = havel_hakimi_fill(degrees, adj, edge_stack, edge_pos)
        if m >= 0:
            return m, attempt
    return -1, budget


@njit(cache=True)
def _evolve_batched(adj, edge_stack, edge_pos, m, iters, r):
    """Chain iterations on numba's internal RNG with batched draws.

    Each iteration consumes exactly two uniforms: one encodes the proposed
    pair, the other both the removal decision (x < r) and, conditionally,
    the removed slot (x/r is uniform given x < r).
    """
    n = adj.shape[0]
    pairs = n * (n - 1)
    block = 4096
    done = 0
    while done < iters:
        todo = min(block, iters - done)
        draws = np.random.random(2 * todo)
        for t in range(todo):
            w = int(draws[2 * t] * pairs)
            u = w // (n - 1)
            v = w % (n - 1)
            if v >= u:
                v += 1
            if not adj[u, v]:
                adj[u, v] = True
                adj[v, u] = True
                edge_stack[m, 0] = u
                edge_stack[m, 1] = v
                edge_pos[u, v] = m
                edge_pos[v, u] = m
                m += 1
            x = draws[2 * t + 1]
            if x < r and m > 0:
                k = min(int(x / r * m), m - 1)
                a = edge_stack[k, 0]
                b = edge_stack[k, 1]
                adj[a, b] = False
                adj[b, a] = False
                edge_pos[a, b] = -1
                edge_pos[b, a] = -1
                m -= 1
                if k != m:
                    c = edge_stack[m, 0]
                    d = edge_stack[m, 1]
                    edge_stack[k, 0] = c
                    edge_stack[k, 1] = d
                    edge_pos[c, d] = k
                    edge_pos[d, c] = k
        done += todo
    return m


@njit(cache=True)
def phi_ensemble(cdf, copies, seeds, horizon_iters, r, budget, hist, retries_out):
    """Coarse timestepper inner loop over a whole ensemble.

    For each copy: reseed the internal RNG from seeds[c], draw a degree
    sequence from `cdf` (inverse transform, whole-sequence resampling on
    odd sums or non-graphical draws), realize it via Havel-Hakimi, evolve
    `horizon_iters` iterations, and accumulate the final degree histogram
    into `hist`. Returns False if any copy exhausts its retry budget.
    """
    n = cdf.shape[0]
    adj = np.zeros((n, n), dtype=np.bool_)
    edge_stack = np.zeros((n * (n - 1) // 2, 2), dtype=np.int32)
    edge_pos = np.full((n, n), -1, dtype=np.int32)
    degrees = np.empty(n, dtype=np.int64)
    ok = True
    for c in range(copies):
        np.random.seed(seeds[c])
        m = -1
        retries_out[c] = budget
        for attempt in range(budget):
            total = 0
            for i in range(n):
                p = np.random.random()
                d = np.searchsorted(cdf, p, side="right")
                if d >= n:
                    d = n - 1
                degrees[i] = d
                total += d
            if total % 2 == 1:
                continue
            m = havel_hakimi_fill(degrees, adj, edge_stack, edge_pos)
            if m >= 0:
                retries_out[c] = attempt
                break
        if m < 0:
            ok = False
            break
        m = _evolve_batched(adj, edge_stack, edge_pos, m, horizon_iters, r)
        for i in range(n):
            d = 0
            for j in range(n):
                if adj[i, j]:
                    d += 1
            hist[d] += 1
    return ok

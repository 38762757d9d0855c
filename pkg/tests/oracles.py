"""Slow reference implementations used as test oracles."""
from __future__ import annotations

import math

import mpmath


def naive_reuse_distances(seq):
    """Distinct other addresses between consecutive uses; None for first touch."""
    last = {}
    out = []
    for t, a in enumerate(seq):
        if a in last:
            out.append(len(set(seq[last[a] + 1:t])))
        else:
            out.append(None)
        last[a] = t
    return out


def lru_stack_distances(seq):
    """Classic LRU stack: the depth of an address in the recency list is
    its reuse distance.  O(n * alphabet); None for first touch."""
    stack = []
    out = []
    for a in seq:
        try:
            i = stack.index(a)
        except ValueError:
            out.append(None)
        else:
            out.append(i)
            del stack[i]
        stack.insert(0, a)
    return out


def exact_hit_probability(d, assoc, blocks, digits=200):
    """Stack-distance hit probability in arbitrary precision."""
    with mpmath.workdps(digits):
        p = mpmath.mpf(assoc) / blocks
        q = mpmath.mpf(blocks - assoc) / blocks
        total = mpmath.mpf(0)
        for a in range(min(assoc - 1, d) + 1):
            total += mpmath.binomial(d, a) * p**a * q ** (d - a)
        return float(total)


def list_schedule(vertices, edges, pools, routes):
    """Step-by-step greedy list scheduling.

    ``vertices`` is ``[(id, cls)]``; ``pools`` maps pool name to
    ``(latency, throughput, count)`` and ``routes`` class to pool name.
    Time jumps from one retirement instant to the next; at each instant every
    vertex whose parents have all retired is placed, lowest id first, on the
    pipeline of its pool that can issue it soonest (lowest index on ties).
    """
    cls = dict(vertices)
    parents = {v: [] for v in cls}
    for u, w in edges:
        parents[w].append(u)
    free = {name: [0.0] * c for name, (_, _, c) in pools.items()}
    retire = {}
    t = 0.0
    while len(retire) < len(cls):
        ready = sorted(
            v for v in cls
            if v not in retire and all(u in retire and retire[u] <= t for u in parents[v])
        )
        for v in ready:
            name = routes.get(cls[v], routes.get("unknown"))
            lat, thr, count = pools[name]
            slots = free[name]
            best = None
            for i in range(count):
                start = max(slots[i], t)
                if best is None or start < best[0]:
                    best = (start, i)
            start, i = best
            slots[i] = start + thr
            retire[v] = start + lat
        later = [r for r in retire.values() if r > t]
        if not later:
            break
        t = min(later)
    return max(retire.values()) if retire else 0.0


# Per-row data of the JACOBI block table: count expression, per-execution
# time and the reference count x time product, at n=4096, k=10.
JACOBI = [
    (lambda n, k: n * n, 8.48e-8, 1.423),
    (lambda n, k: n * n - n - 1, 7.435e-8, 1.247),
    (lambda n, k: n * n - 2 * n + 1, 8.56e-8, 1.435),
    (lambda n, k: n * n - 3 * n + 2, 6.65e-7, 11.155),
    (lambda n, k: n * n / 2, 3.41e-8, 0.285),
    (lambda n, k: k * n * n, 3.09e-8, 5.704),
    (lambda n, k: k * n * n - n * n, 1.23e-8, 1.857),
    (lambda n, k: k * n * n, 1.9e-9, 0.318),
    (lambda n, k: k * n, 1.08e-8, 0.0004),
]
JACOBI_TERMS = [
    {("n", "n"): 1.0},
    {("n", "n"): 1.0, ("n",): -1.0, (): -1.0},
    {("n", "n"): 1.0, ("n",): -2.0, (): 1.0},
    {("n", "n"): 1.0, ("n",): -3.0, (): 2.0},
    {("n", "n"): 0.5},
    {("n", "n", "k"): 1.0},
    {("n", "n", "k"): 1.0, ("n", "n"): -1.0},
    {("n", "n", "k"): 1.0},
    {("n", "k"): 1.0},
]
JACOBI_TOTAL = 23.427


def hand_matmul_accesses(n, l, m):
    """Access count of the synthetic matmul, enumerated block by block."""
    return (
        1                      # entry: i = 0
        + (n + 1)              # init.i.cond
        + n                    # init.i.body: j = 0
        + n * (m + 1)          # init.j.cond
        + 3 * n * m            # init.j.body
        + 2 * n * m            # init.j.inc
        + 2 * n                # init.i.inc
        + 1                    # init.i.end: i = 0
        + (n + 1)              # mm.i.cond
        + n                    # mm.i.body
        + n * (l + 1)          # mm.j.cond
        + n * l                # mm.j.body
        + n * l * (m + 1)      # mm.k.cond
        + 7 * n * l * m        # mm.k.body
        + 2 * n * l * m        # mm.k.inc
        + 2 * n * l            # mm.j.inc
        + 2 * n                # mm.i.inc
    )


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_)

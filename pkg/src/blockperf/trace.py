"""Reuse-distance analysis over annotated memory traces.

The engine keeps the last access time of every address and a Fenwick tree
marking, for each distinct address, the position of its most recent access.
The reuse distance of an access at time ``t`` whose address was last seen at
``p`` is the number of marks strictly between ``p`` and ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import INF, MemoryTrace, ReuseProfile

try:  # pragma: no cover - exercised implicitly
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

__all__ = [
    "BlockWindow",
    "BlockNotFoundError",
    "EmptyTraceError",
    "reuse_distances",
    "reuse_distance_exact",
    "block_windows",
    "block_reuse_profile",
    "all_block_profiles",
    "whole_program_profile",
    "bin_profile",
    "equal_mass_bins",
]


class BlockNotFoundError(KeyError):
    pass


class EmptyTraceError(ValueError):
    pass


@dataclass(frozen=True)
class BlockWindow:
    """One dynamic execution of a block, as record indices ``[start, end)``."""

    bb_id: int
    start_idx: int
    end_idx: int


def _distances_py(ids: np.ndarray, n_unique: int) -> np.ndarray:
    n = len(ids)
    last = np.full(n_unique, -1, dtype=np.int64)
    tree = np.zeros(n + 1, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    marked = 0
    for t in range(n):
        a = ids[t]
        p = last[a]
        if p < 0:
            out[t] = -1
        else:
            i = p + 1
            s = 0
            while i > 0:
                s += tree[i]
                i -= i & (-i)
            out[t] = marked - s
            i = p + 1
            while i <= n:
                tree[i] -= 1
                i += i & (-i)
            marked -= 1
        i = t + 1
        while i <= n:
            tree[i] += 1
            i += i & (-i)
        marked += 1
        last[a] = t
    return out


_distances_kernel = njit(cache=True, nogil=True)(_distances_py) if njit else _distances_py


def _line_ids(addresses: np.ndarray, line_bytes: int | None) -> tuple[np.ndarray, int]:
    addrs = np.asarray(addresses, dtype=np.uint64)
    if line_bytes:
        shift = int(line_bytes).bit_length() - 1
        if 1 << shift != line_bytes:
            raise ValueError(f"line size {line_bytes} is not a power of two")
        addrs = addrs >> np.uint64(shift)
    uniq, inv = np.unique(addrs, return_inverse=True)
    return inv.astype(np.int64).ravel(), len(uniq)


def reuse_distances(addresses, line_bytes: int | None = None) -> np.ndarray:
    """Per-access reuse distance; ``-1`` marks a first touch (infinite distance).

    With ``line_bytes`` the addresses are first reduced to cache-line numbers.
    """
    if isinstance(addresses, MemoryTrace):
        addresses = addresses.addresses
    if len(addresses) == 0:
        return np.empty(0, dtype=np.int64)
    ids, n_unique = _line_ids(addresses, line_bytes)
    return _distances_kernel(ids, n_unique)


def reuse_distance_exact(trace: MemoryTrace, line_bytes: int | None = None) -> list[tuple[int, float]]:
    d = reuse_distances(trace.addresses, line_bytes)
    return [(i, INF if x < 0 else int(x)) for i, x in enumerate(d.tolist())]


def _histogram(dist: np.ndarray) -> ReuseProfile:
    if len(dist) == 0:
        return ReuseProfile((), 0)
    vals, counts = np.unique(dist, return_counts=True)
    hist = {}
    for v, c in zip(vals.tolist(), counts.tolist()):
        hist[INF if v < 0 else v] = c
    return ReuseProfile.from_counts(hist, total=len(dist))


def block_windows(trace: MemoryTrace, bb_id: int | None = None) -> list[BlockWindow]:
    offsets = trace.entry_offsets
    ends = np.append(offsets[1:], len(trace.addresses))
    out = []
    for w, (b, start, end) in enumerate(zip(trace.entry_blocks.tolist(), offsets.tolist(), ends.tolist())):
        if bb_id is not None and b != bb_id:
            continue
        # block entry w sits at record index start + w
        out.append(BlockWindow(b, start + w, end + w + 1))
    return out


def _access_ranges(trace: MemoryTrace) -> tuple[np.ndarray, np.ndarray]:
    starts = trace.entry_offsets
    ends = np.append(starts[1:], len(trace.addresses)).astype(np.int64)
    return starts, ends


def _sample_windows(n_windows: int, sample_fraction: float, seed: int, bb_id: int) -> np.ndarray:
    if not (0.0 < sample_fraction <= 1.0):
        raise ValueError(f"sample_fraction must lie in (0, 1], got {sample_fraction}")
    k = max(1, math.ceil(sample_fraction * n_windows - 1e-9))
    if k >= n_windows:
        return np.arange(n_windows)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(bb_id,)))
    return np.sort(rng.choice(n_windows, size=k, replace=False))


def _profile_from_windows(dist, starts, ends, picked) -> ReuseProfile:
    s, e = starts[picked], ends[picked]
    if len(s) == 0:
        return ReuseProfile((), 0)
    lengths = e - s
    total = int(lengths.sum())
    if total == 0:
        return ReuseProfile((), 0)
    # gather all access indices of the picked windows
    idx = np.repeat(s - np.cumsum(lengths) + lengths, lengths) + np.arange(total)
    return _histogram(dist[idx])


def block_reuse_profile(
    trace: MemoryTrace,
    bb_id: int,
    sample_fraction: float = 1.0,
    seed: int = 0,
    line_bytes: int | None = None,
    distances: np.ndarray | None = None,
) -> ReuseProfile:
    """Sampled reuse profile of one basic block.

    A seeded random subset of the block's dynamic windows is measured; the
    backward search for each access still spans the whole trace.
    """
    mask = trace.entry_blocks == bb_id
    if not mask.any():
        raise BlockNotFoundError(bb_id)
    if distances is None:
        distances = reuse_distances(trace.addresses, line_bytes)
    starts, ends = _access_ranges(trace)
    win = np.flatnonzero(mask)
    picked = win[_sample_windows(len(win), sample_fraction, seed, bb_id)]
    return _profile_from_windows(distances, starts, ends, picked)


def all_block_profiles(
    trace: MemoryTrace,
    sample_fraction: float = 1.0,
    seed: int = 0,
    line_bytes: int | None = None,
) -> dict[int, ReuseProfile]:
    """``block_reuse_profile`` for every block in the trace, sharing one distance pass."""
    distances = reuse_distances(trace.addresses, line_bytes)
    return {
        b: block_reuse_profile(trace, b, sample_fraction, seed, distances=distances)
        for b in sorted(set(trace.entry_blocks.tolist()))
    }


def whole_program_profile(trace: MemoryTrace, line_bytes: int | None = None) -> ReuseProfile:
    if len(trace.addresses) == 0:
        raise EmptyTraceError("trace contains no memory accesses")
    return _histogram(reuse_distances(trace.addresses, line_bytes))


def bin_profile(profile: ReuseProfile, max_bins: int) -> ReuseProfile:
    """Merge finite distances into at most ``max_bins - 1`` log-spaced bins.

    Each merged bin is represented by its probability-weighted mean distance
    (rounded half-up).  The infinite bin is kept as is.
    """
    if max_bins < 2:
        raise ValueError("max_bins must be >= 2")
    finite = [(d, p) for d, p in profile.bins if d != INF]
    nb = max_bins - 1
    if len(finite) <= nb:
        return profile
    inf_bins = [(d, p) for d, p in profile.bins if d == INF]
    xs = np.log1p(np.array([d for d, _ in finite], dtype=float))
    lo, hi = xs[0], xs[-1]
    idx = np.minimum(((xs - lo) / (hi - lo) * nb).astype(int), nb - 1)
    merged: dict[int, list[float]] = {}
    groups: dict[int, list[tuple[int, float]]] = {}
    for j, (d, p) in zip(idx.tolist(), finite):
        groups.setdefault(j, []).append((d, p))
    for j in sorted(groups):
        items = groups[j]
        mass = math.fsum(p for _, p in items)
        mean = math.fsum(d * p for d, p in items) / mass if mass > 0 else items[0][0]
        rep = math.floor(mean + 0.5)
        merged.setdefault(rep, []).extend(p for _, p in items)
    bins = [(d, math.fsum(ps)) for d, ps in sorted(merged.items())]
    return ReuseProfile(tuple(bins + inf_bins), profile.total_accesses)


def equal_mass_bins(profile: ReuseProfile, nbins: int) -> tuple[np.ndarray, float]:
    """Split the finite part of ``profile`` into ``nbins - 1`` equal-mass slices.

    Returns the mean distance of every slice (ascending) and the probability
    of an infinite distance.  Slices are aligned by index across profiles,
    which is what the per-bin regression needs.
    """
    if nbins < 2:
        raise ValueError("nbins must be >= 2")
    k = nbins - 1
    finite = [(d, p) for d, p in profile.bins if d != INF]
    inf_p = profile.inf_probability
    mass = math.fsum(p for _, p in finite)
    if mass <= 0:
        return np.zeros(k), inf_p
    d = np.array([x for x, _ in finite], dtype=float)
    p = np.array([x for _, x in finite], dtype=float) / mass
    cdf = np.concatenate(([0.0], np.cumsum(p)))
    cdf[-1] = 1.0
    integral = np.concatenate(([0.0], np.cumsum(d * p)))
    u = np.linspace(0.0, 1.0, k + 1)
    g = np.interp(u, cdf, integral)
    means = np.diff(g) * k
    return np.maximum(means, 0.0), inf_p

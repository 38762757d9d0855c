"""Analytical memory model: stack-distance hit probabilities and the
hierarchy-weighted effective latency / bandwidth of a memory operation."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

from .model import INF, CacheLevel, EffectiveMemory, HardwareConfig, ReuseProfile

__all__ = [
    "hit_given_distance",
    "aggregate_profile",
    "level_hit_rate",
    "hit_rates",
    "nested_mixture",
    "effective_memory",
    "DegenerateInputError",
]


class DegenerateInputError(ValueError):
    pass


def _kahan(values: Iterable[float]) -> float:
    total = 0.0
    comp = 0.0
    for v in values:
        y = v - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def hit_given_distance(d: float, assoc: int, blocks: int) -> float:
    """Probability that an access with reuse distance ``d`` hits in a cache of
    ``blocks`` lines and associativity ``assoc``.

    Binomial mixture ``sum_{a<A} C(d,a) (A/B)^a ((B-A)/B)^(d-a)``, evaluated
    term-wise in log space.
    """
    if assoc < 1 or assoc > blocks:
        raise ValueError(f"need 1 <= A <= B, got A={assoc}, B={blocks}")
    if d == INF:
        return 0.0
    d = int(d)
    if d < 0:
        raise ValueError("reuse distance must be nonnegative")
    if d < assoc and assoc == blocks:
        return 1.0
    if assoc == blocks:
        return 0.0
    log_p = math.log(assoc) - math.log(blocks)
    log_q = math.log1p(-assoc / blocks)
    terms = []
    log_falling = 0.0  # log d(d-1)...(d-a+1)
    for a in range(min(assoc - 1, d) + 1):
        if a > 0:
            log_falling += math.log(d - a + 1)
        log_binom = log_falling - math.lgamma(a + 1)
        terms.append(math.exp(log_binom + a * log_p + (d - a) * log_q))
    return min(1.0, max(0.0, _kahan(terms)))


def aggregate_profile(block_profiles: Sequence[tuple[ReuseProfile, float]]) -> ReuseProfile:
    """Weighted mixture ``P(d) = sum_i w_i P_i(d) / sum_i w_i``."""
    weights = [float(w) for _, w in block_profiles]
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    used = [(p, w) for p, w in block_profiles if w > 0 and p.bins]
    if not used:
        raise DegenerateInputError("all block weights are zero")
    if len(used) == 1:
        return used[0][0]
    total = math.fsum(w for _, w in used)
    acc: dict[float, list[float]] = {}
    for prof, w in used:
        for d, p in prof.bins:
            acc.setdefault(d, []).append(w * p)
    bins = tuple((d, math.fsum(v) / total) for d, v in sorted(acc.items()))
    s = math.fsum(p for _, p in bins)
    bins = tuple((d, p / s) for d, p in bins)
    n_acc = sum(p.total_accesses for p, _ in used)
    return ReuseProfile(bins, n_acc)


def level_hit_rate(profile: ReuseProfile, level: CacheLevel) -> float:
    return min(1.0, _kahan(
        p * hit_given_distance(d, level.associativity, level.blocks)
        for d, p in profile.bins
    ))


def hit_rates(profile: ReuseProfile, hw: HardwareConfig) -> tuple[float, ...]:
    return tuple(level_hit_rate(profile, lvl) for lvl in hw.cache_levels)


def nested_mixture(rates: Sequence[float], values: Sequence[float], terminal: float) -> float:
    """``P1 v1 + (1-P1)[P2 v2 + (1-P2)[... + (1-Pn) terminal]]``."""
    acc = terminal
    for p, v in zip(reversed(rates), reversed(values)):
        acc = p * v + (1.0 - p) * acc
    return acc


def effective_memory(
    profile: ReuseProfile,
    hw: HardwareConfig,
    rates: Sequence[float] | None = None,
) -> EffectiveMemory:
    """Effective latency and bandwidth for the given whole-program profile.

    ``rates`` overrides the per-level hit rates (mainly for testing).
    """
    if not hw.cache_levels:
        raise ValueError("hardware has no cache levels")
    if rates is None:
        rates = hit_rates(profile, hw)
    rates = tuple(float(r) for r in rates)
    lam = nested_mixture(rates, [c.latency_s for c in hw.cache_levels], hw.ram.latency_s)
    beta = nested_mixture(rates, [c.bandwidth_s for c in hw.cache_levels], hw.ram.bandwidth_s)
    return EffectiveMemory(lam, beta, rates)

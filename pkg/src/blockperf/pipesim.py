"""Discrete-event simulation of instruction pipelines over a dependency graphlet.

A vertex becomes eligible once all its parents have retired.  Eligible
vertices are committed, in ascending id, to the earliest-available pipeline
of their class (lowest pipeline index on ties).  A pipeline issues at most one
instruction every ``throughput`` seconds and retires each ``latency`` seconds
after its issue, so ``p`` back-to-back independent instructions on one
pipeline finish at ``latency + (p - 1) * throughput``.
"""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .model import (
    FALLBACK_CLASS,
    MEMORY_CLASSES,
    EffectiveMemory,
    Graphlet,
    HardwareConfig,
    ProgramModel,
)

MEMORY_POOL = "memory"

ISSUE, STAGE_ADVANCE, RETIRE = "issue", "stage_advance", "retire"
_KIND_ORDER = {RETIRE: 0, STAGE_ADVANCE: 1, ISSUE: 2}


class StructuralError(ValueError):
    pass


class ConfigError(KeyError):
    pass


@dataclass(frozen=True)
class Pool:
    latency_s: float
    throughput_s: float
    count: int


@dataclass(frozen=True)
class PipelineBank:
    """Pipeline pools and the routing of instruction classes onto them."""

    pools: Mapping[str, Pool]
    routes: Mapping[str, str]

    @classmethod
    def from_hardware(cls, hw: HardwareConfig, memory: EffectiveMemory) -> "PipelineBank":
        pools = {}
        routes = {}
        for c, spec in hw.pipelines.items():
            if c in MEMORY_CLASSES:
                continue
            pools[c] = Pool(spec.latency_s, spec.throughput_s, spec.count)
            routes[c] = c
        pools[MEMORY_POOL] = Pool(memory.lambda_eff_s, memory.beta_eff_s, hw.memory_pipeline_count)
        for c in MEMORY_CLASSES:
            routes[c] = MEMORY_POOL
        return cls(pools, routes)

    def pool_of(self, cls: str) -> str:
        name = self.routes.get(cls)
        if name is None:
            name = self.routes.get(FALLBACK_CLASS)
        if name is None:
            raise ConfigError(f"instruction class {cls!r} has no pipeline and no fallback")
        return name


@dataclass(frozen=True)
class SimEvent:
    time_s: float
    kind: str
    vertex_id: int
    pipeline_id: tuple[str, int]


@dataclass
class SimResult:
    time_s: float
    issue_counts: dict[str, int]
    pipeline_issues: dict[tuple[str, int], int]
    occupancy: dict[tuple[str, int], float]
    schedule: dict[int, tuple[tuple[str, int], float, float]] = field(default_factory=dict)
    events: list[SimEvent] = field(default_factory=list)


def simulate_graphlet(g: Graphlet, bank: PipelineBank, record: bool = False) -> SimResult:
    """Makespan and pipeline statistics for one execution of ``g``."""
    if g.topological_order() is None:
        raise StructuralError("graphlet contains a dependency cycle")
    classes = g.classes
    children: dict[int, list[int]] = defaultdict(list)
    waiting = {v: 0 for v in classes}
    retired_at: dict[int, float] = {}
    for u, w in g.edges:
        children[u].append(w)
        waiting[w] += 1

    next_free: dict[str, list[float]] = {}
    schedule = {}
    events: list[SimEvent] = []
    heap: list[tuple[float, int, int, int]] = []

    def commit(v: int, t: float):
        name = bank.pool_of(classes[v])
        pool = bank.pools[name]
        slots = next_free.setdefault(name, [0.0] * pool.count)
        best = min(range(pool.count), key=lambda i: (max(slots[i], t), i))
        issue = max(slots[best], t)
        slots[best] = issue + pool.throughput_s
        retire = issue + pool.latency_s
        schedule[v] = ((name, best), issue, retire)
        heapq.heappush(heap, (retire, v, _KIND_ORDER[RETIRE], best))
        if record:
            events.append(SimEvent(issue, ISSUE, v, (name, best)))
            events.append(SimEvent(issue + pool.throughput_s, STAGE_ADVANCE, v, (name, best)))

    for v in sorted(v for v, k in waiting.items() if k == 0):
        commit(v, 0.0)

    makespan = 0.0
    while heap:
        t = heap[0][0]
        ready = []
        while heap and heap[0][0] == t:
            _, v, _, pid = heapq.heappop(heap)
            retired_at[v] = t
            if record:
                events.append(SimEvent(t, RETIRE, v, schedule[v][0]))
            for w in children[v]:
                waiting[w] -= 1
                if waiting[w] == 0:
                    ready.append(w)
        makespan = t
        for w in sorted(ready):
            commit(w, t)

    issue_counts = Counter(classes[v] for v in schedule)
    per_pipe = Counter(pid for pid, _, _ in schedule.values())
    occupancy = {}
    for pid, n in per_pipe.items():
        thr = bank.pools[pid[0]].throughput_s
        occupancy[pid] = min(1.0, n * thr / makespan) if makespan > 0 else 0.0
    if record:
        events.sort(key=lambda e: (e.time_s, e.vertex_id, _KIND_ORDER[e.kind]))
    return SimResult(makespan, dict(issue_counts), dict(per_pipe), occupancy, schedule, events)


def block_times(model: ProgramModel, bank: PipelineBank) -> dict[int, float]:
    """Per-execution time of every block; each graphlet is simulated once."""
    out = {}
    cache: dict[Graphlet, float] = {}
    for b in model.blocks:
        if b.time_s is not None:
            out[b.id] = float(b.time_s)
            continue
        t = cache.get(b.graphlet)
        if t is None:
            t = simulate_graphlet(b.graphlet, bank).time_s
            cache[b.graphlet] = t
        out[b.id] = t
    return out

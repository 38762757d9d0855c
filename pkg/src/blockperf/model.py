"""Domain types shared by every stage of the toolkit.

Hardware descriptions, program structure (CFG + per-block dependency
graphlets), memory traces, reuse profiles and fitted scaling models all live
here.  Everything is immutable after construction.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

INF = math.inf

#: Instruction classes understood out of the box.  Hardware files may add more.
INSTRUCTION_CLASSES = (
    "iadd", "fadd", "idiv", "fdiv", "imul", "fmul",
    "load", "store", "alu", "br", "unknown",
)
MEMORY_CLASSES = frozenset({"load", "store"})
FALLBACK_CLASS = "unknown"

PROB_TOL = 1e-9

LOAD, STORE = 0, 1


# --------------------------------------------------------------------------
# hardware
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineSpec:
    count: int
    latency_s: float
    throughput_s: float

    @property
    def depth(self) -> float:
        return self.latency_s / self.throughput_s


@dataclass(frozen=True)
class CacheLevel:
    size_bytes: int
    line_bytes: int
    associativity: int
    latency_s: float
    bandwidth_s: float

    @property
    def blocks(self) -> int:
        """Capacity in cache lines (the B of the stack-distance model)."""
        return self.size_bytes // self.line_bytes


@dataclass(frozen=True)
class RamSpec:
    latency_s: float
    bandwidth_s: float
    size_bytes: int = 0


@dataclass(frozen=True)
class HardwareConfig:
    name: str
    clock_hz: float
    pipelines: Mapping[str, PipelineSpec]
    cache_levels: tuple[CacheLevel, ...]
    ram: RamSpec

    def pipeline_for(self, cls: str) -> PipelineSpec:
        spec = self.pipelines.get(cls)
        if spec is None:
            spec = self.pipelines.get(FALLBACK_CLASS)
        if spec is None:
            raise KeyError(f"no pipeline for class {cls!r} and no {FALLBACK_CLASS!r} fallback")
        return spec

    @property
    def memory_pipeline_count(self) -> int:
        # load and store share one pool; its size comes from the ``load`` entry
        spec = self.pipelines.get("load")
        return spec.count if spec is not None else 1


# --------------------------------------------------------------------------
# fitted models
# --------------------------------------------------------------------------

Term = tuple[str, ...]  # multiset of factors; "1/x" is a reciprocal factor


def term_value(term: Term, point: Mapping[str, float]) -> float:
    v = 1.0
    for factor in term:
        if factor.startswith("1/"):
            v /= float(point[factor[2:]])
        else:
            v *= float(point[factor])
    return v


def term_str(term: Term) -> str:
    if not term:
        return "1"
    powers: dict[str, int] = {}
    for f in term:
        powers[f] = powers.get(f, 0) + 1
    parts = []
    for f, p in powers.items():
        parts.append(f if p == 1 else f"{f}^{p}")
    return "*".join(parts)


@dataclass(frozen=True)
class ScalingModel:
    """Sparse multi-linear model ``intercept + sum(w_k * term_k(point))``."""

    terms: tuple[Term, ...]
    weights: tuple[float, ...]
    intercept: float
    l1_penalty: float = 0.0
    constant: bool = False

    def __post_init__(self):
        if len(self.terms) != len(self.weights):
            raise ValueError("terms and weights differ in length")

    @classmethod
    def constant_model(cls, value: float) -> "ScalingModel":
        return cls(terms=(), weights=(), intercept=float(value), constant=True)

    def evaluate(self, point: Mapping[str, float]) -> float:
        total = self.intercept
        for t, w in zip(self.terms, self.weights):
            if w != 0.0:
                total += w * term_value(t, point)
        return total

    def predict_count(self, point: Mapping[str, float]) -> int:
        return round_count(self.evaluate(point))

    def nonzero(self) -> list[tuple[Term, float]]:
        return [(t, w) for t, w in zip(self.terms, self.weights) if w != 0.0]

    def __str__(self) -> str:
        parts = [f"{w:.6g}*{term_str(t)}" for t, w in self.nonzero()]
        if self.intercept != 0.0 or not parts:
            parts.append(f"{self.intercept:.6g}")
        return " + ".join(parts)


def round_count(value: float) -> int:
    """Half-up rounding clamped at zero."""
    if not math.isfinite(value):
        raise ValueError(f"non-finite count prediction {value!r}")
    return max(0, math.floor(value + 0.5))


@dataclass(frozen=True)
class ReuseBinModel:
    """Extrapolation model for one block's binned reuse profile.

    ``mean_models[j]`` predicts the mean finite reuse distance of bin ``j``.
    The compulsory-miss share comes from the two access-count models; the
    split of the remaining mass across finite bins is carried from the
    training input nearest to the query.
    """

    nbins: int
    mean_models: tuple[ScalingModel, ...]
    inf_count_model: ScalingModel
    finite_count_model: ScalingModel
    anchor_points: tuple[Mapping[str, float], ...]
    anchor_shares: tuple[tuple[float, ...], ...]


# --------------------------------------------------------------------------
# program structure
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Graphlet:
    vertices: tuple[tuple[int, str], ...]
    edges: tuple[tuple[int, int], ...] = ()

    @property
    def classes(self) -> dict[int, str]:
        return dict(self.vertices)

    def memory_ops(self) -> int:
        return sum(1 for _, c in self.vertices if c in MEMORY_CLASSES)

    def topological_order(self) -> list[int] | None:
        """Kahn order (ties by ascending id), or None when a cycle exists."""
        ids = [v for v, _ in self.vertices]
        known = set(ids)
        indeg = {v: 0 for v in ids}
        children: dict[int, list[int]] = defaultdict(list)
        for u, w in self.edges:
            if u not in known or w not in known:
                continue
            children[u].append(w)
            indeg[w] += 1
        ready = sorted(v for v in ids if indeg[v] == 0)
        order = []
        heapq.heapify(ready)
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for w in children[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        return order if len(order) == len(ids) else None


@dataclass(frozen=True)
class BasicBlockModel:
    id: int
    graphlet: Graphlet
    count: int | ScalingModel = 0
    label: str = ""
    time_s: float | None = None  # fixed per-execution time, bypasses simulation
    reuse: ReuseBinModel | None = None


@dataclass(frozen=True)
class CfgEdge:
    src: int
    dst: int
    prob: float | None = None
    model: ScalingModel | None = None


@dataclass(frozen=True)
class ProgramModel:
    blocks: tuple[BasicBlockModel, ...]
    cfg_edges: tuple[CfgEdge, ...] = ()
    input_params: tuple[str, ...] = ()
    inputs: Mapping[str, float] | None = None  # input point counts were observed at

    def block(self, bb_id: int) -> BasicBlockModel:
        b = self.blocks[bb_id]
        if b.id != bb_id:
            raise KeyError(bb_id)
        return b


# --------------------------------------------------------------------------
# traces and profiles
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MemoryTrace:
    """Annotated trace stored column-wise.

    Block entry ``w`` executed block ``entry_blocks[w]`` and owns the accesses
    ``addresses[entry_offsets[w]:entry_offsets[w + 1]]``.
    """

    entry_blocks: np.ndarray
    entry_offsets: np.ndarray
    addresses: np.ndarray
    kinds: np.ndarray

    def __post_init__(self):
        for name in ("entry_blocks", "entry_offsets", "addresses", "kinds"):
            arr = getattr(self, name)
            arr.flags.writeable = False
        if len(self.entry_blocks) != len(self.entry_offsets):
            raise ValueError("entry_blocks and entry_offsets differ in length")
        if len(self.addresses) != len(self.kinds):
            raise ValueError("addresses and kinds differ in length")
        if len(self.addresses) and (len(self.entry_offsets) == 0 or self.entry_offsets[0] != 0):
            raise ValueError("trace has accesses before the first block entry")
        if len(self.entry_offsets) > 1 and np.any(np.diff(self.entry_offsets) < 0):
            raise ValueError("entry offsets must be non-decreasing")

    @classmethod
    def from_records(cls, records: Sequence[tuple]) -> "MemoryTrace":
        """Build from ``("B", bb_id)`` and ``("M", address, "L"|"S")`` tuples."""
        blocks, offsets, addrs, kinds = [], [], [], []
        for rec in records:
            if rec[0] == "B":
                blocks.append(int(rec[1]))
                offsets.append(len(addrs))
            elif rec[0] == "M":
                if not blocks:
                    raise ValueError("access before first block entry")
                addrs.append(int(rec[1]))
                kinds.append(STORE if rec[2] == "S" else LOAD)
            else:
                raise ValueError(f"unknown record {rec!r}")
        return cls.from_arrays(blocks, offsets, addrs, kinds)

    @classmethod
    def from_arrays(cls, blocks, offsets, addrs, kinds) -> "MemoryTrace":
        return cls(
            np.asarray(blocks, dtype=np.int64),
            np.asarray(offsets, dtype=np.int64),
            np.asarray(addrs, dtype=np.uint64),
            np.asarray(kinds, dtype=np.uint8),
        )

    def __len__(self) -> int:
        return len(self.addresses)

    @property
    def n_records(self) -> int:
        return len(self.addresses) + len(self.entry_blocks)

    def access_blocks(self) -> np.ndarray:
        """Owning block id of every access."""
        counts = np.diff(np.append(self.entry_offsets, len(self.addresses)))
        return np.repeat(self.entry_blocks, counts)

    def block_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.entry_blocks, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def __eq__(self, other):
        if not isinstance(other, MemoryTrace):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("entry_blocks", "entry_offsets", "addresses", "kinds")
        )


@dataclass(frozen=True)
class ReuseProfile:
    bins: tuple[tuple[float, float], ...] = ()
    total_accesses: int = 0

    def __post_init__(self):
        prev = -1.0
        for d, p in self.bins:
            if not (d == INF or (d >= 0 and float(d).is_integer())):
                raise ValueError(f"bad reuse distance {d!r}")
            if d <= prev:
                raise ValueError("distances must be strictly increasing with inf last")
            if not (0.0 <= p <= 1.0 + PROB_TOL):
                raise ValueError(f"probability {p!r} outside [0, 1]")
            prev = d
        if self.total_accesses > 0 or self.bins:
            s = math.fsum(p for _, p in self.bins)
            if abs(s - 1.0) > PROB_TOL:
                raise ValueError(f"profile probabilities sum to {s!r}, not 1")

    @classmethod
    def from_counts(cls, counts: Mapping[float, float], total: int | None = None) -> "ReuseProfile":
        items = sorted((d, c) for d, c in counts.items() if c > 0)
        mass = math.fsum(c for _, c in items)
        if mass == 0:
            return cls((), 0)
        bins = tuple((_norm_distance(d), c / mass) for d, c in items)
        return cls(bins, int(round(mass)) if total is None else int(total))

    def as_dict(self) -> dict[float, float]:
        return dict(self.bins)

    @property
    def distances(self) -> list[float]:
        return [d for d, _ in self.bins]

    @property
    def inf_probability(self) -> float:
        return self.bins[-1][1] if self.bins and self.bins[-1][0] == INF else 0.0


def _norm_distance(d):
    return INF if d == INF else int(d)


@dataclass(frozen=True)
class EffectiveMemory:
    lambda_eff_s: float
    beta_eff_s: float
    hit_rates: tuple[float, ...]


@dataclass(frozen=True)
class BlockResult:
    block_id: int
    time_s: float
    count: int
    contribution_s: float


@dataclass(frozen=True)
class PredictionReport:
    per_block: tuple[BlockResult, ...]
    total_runtime_s: float
    effective_memory: EffectiveMemory
    aggregate_profile: ReuseProfile
    instruction_mix: Mapping[str, int]
    inputs: Mapping[str, float] = field(default_factory=dict)
    hardware: str = ""

    @property
    def hit_rates(self) -> tuple[float, ...]:
        return self.effective_memory.hit_rates


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

def validate_hardware(config: HardwareConfig) -> list[str]:
    """Every invariant violation as ``"path: message"``; empty means valid."""
    out = []
    if not (config.clock_hz > 0):
        out.append("clock_hz: must be > 0")
    if FALLBACK_CLASS not in config.pipelines:
        out.append(f"pipelines: missing required fallback class {FALLBACK_CLASS!r}")
    for cls, spec in config.pipelines.items():
        p = f"pipelines.{cls}"
        if not (isinstance(spec.count, int) and spec.count >= 1):
            out.append(f"{p}.count: must be a positive integer")
        if not (spec.throughput_s > 0):
            out.append(f"{p}.throughput_s: must be > 0")
        if not (spec.latency_s >= spec.throughput_s):
            out.append(f"{p}.latency_s: must be >= throughput_s")
    if not config.cache_levels:
        out.append("cache_levels: at least one level required")
    for i, lvl in enumerate(config.cache_levels):
        p = f"cache_levels[{i}]"
        if lvl.size_bytes <= 0:
            out.append(f"{p}.size_bytes: must be > 0")
        if lvl.line_bytes <= 0:
            out.append(f"{p}.line_bytes: must be > 0")
        elif lvl.size_bytes % lvl.line_bytes:
            out.append(f"{p}.line_bytes: must divide size_bytes")
        if lvl.associativity < 1:
            out.append(f"{p}.associativity: must be >= 1")
        elif lvl.line_bytes > 0 and lvl.blocks < lvl.associativity:
            out.append(f"{p}.associativity: exceeds number of blocks {lvl.blocks}")
        if not (lvl.latency_s > 0):
            out.append(f"{p}.latency_s: must be > 0")
        if not (lvl.bandwidth_s > 0):
            out.append(f"{p}.bandwidth_s: must be > 0")
        if i > 0 and lvl.size_bytes <= config.cache_levels[i - 1].size_bytes:
            out.append(f"{p}.size_bytes: levels must be ordered by strictly increasing size")
    if not (config.ram.latency_s > 0):
        out.append("ram.latency_s: must be > 0")
    if not (config.ram.bandwidth_s > 0):
        out.append("ram.bandwidth_s: must be > 0")
    return out


def validate_program(model: ProgramModel) -> list[str]:
    out = []
    n = len(model.blocks)
    for i, b in enumerate(model.blocks):
        p = f"blocks[{i}]"
        if b.id != i:
            out.append(f"{p}.id: ids must be dense and unique (expected {i}, got {b.id})")
        ids = [v for v, _ in b.graphlet.vertices]
        if len(set(ids)) != len(ids):
            out.append(f"{p}.graphlet.vertices: duplicate vertex ids")
        known = set(ids)
        dangling = [e for e in b.graphlet.edges if e[0] not in known or e[1] not in known]
        for e in dangling:
            out.append(f"{p}.graphlet.edges: edge {e} references unknown vertex")
        if b.graphlet.topological_order() is None:
            out.append(f"{p}.graphlet: dependency cycle")
        if isinstance(b.count, int) and b.count < 0:
            out.append(f"{p}.count: must be nonnegative")
    outgoing: dict[int, list[float]] = defaultdict(list)
    for j, e in enumerate(model.cfg_edges):
        p = f"cfg_edges[{j}]"
        if not (0 <= e.src < n) or not (0 <= e.dst < n):
            out.append(f"{p}: endpoint out of range 0..{n - 1}")
        if e.prob is not None:
            if not (0.0 <= e.prob <= 1.0):
                out.append(f"{p}.prob: outside [0, 1]")
            outgoing[e.src].append(e.prob)
    for src, probs in sorted(outgoing.items()):
        s = math.fsum(probs)
        if abs(s - 1.0) > PROB_TOL:
            out.append(f"cfg_edges(src={src}): outgoing probabilities sum to {s:.12g}, not 1")
    return out

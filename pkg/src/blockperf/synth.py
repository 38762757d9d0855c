"""Synthetic parametric workloads with known ground truth.

Each kernel is written the way an unoptimised compiler lays it out: every
``for`` loop contributes condition, body, increment and end blocks, with the
induction variable initialised in the preceding block and kept in a stack
slot, so condition and increment blocks touch memory too.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .model import (
    BasicBlockModel,
    CfgEdge,
    Graphlet,
    MemoryTrace,
    ProgramModel,
    ScalingModel,
)

KINDS = ("matmul", "stencil2d", "saxpy")
MAX_ACCESSES = 10_000_000
REGION = 1 << 20  # arrays start on 1 MiB boundaries
STACK_BASE = REGION


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    params: Mapping[str, int]
    element_bytes: int = 8
    layout: Mapping[str, int] = field(default_factory=dict)  # array -> base address

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if any(int(v) < 1 for v in self.params.values()):
            raise ValueError("kernel sizes must be >= 1")
        if self.element_bytes < 1:
            raise ValueError("element_bytes must be >= 1")


@dataclass(frozen=True)
class SynthResult:
    program: ProgramModel
    trace: MemoryTrace
    ground_truth: dict[int, ScalingModel]


# --------------------------------------------------------------------------
# tiny polynomial algebra for the closed-form counts
# --------------------------------------------------------------------------

class Poly(dict):
    """Sparse polynomial: sorted factor tuple -> coefficient."""

    @classmethod
    def var(cls, name):
        return cls({(name,): 1})

    @classmethod
    def const(cls, c):
        return cls({(): c}) if c else cls()

    def __add__(self, other):
        other = _lift(other)
        out = Poly(self)
        for k, v in other.items():
            out[k] = out.get(k, 0) + v
        return Poly({k: v for k, v in out.items() if v})

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -v for k, v in self.items()})

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) - self

    def __mul__(self, other):
        other = _lift(other)
        out = Poly()
        for k1, v1 in self.items():
            for k2, v2 in other.items():
                k = tuple(sorted(k1 + k2))
                out[k] = out.get(k, 0) + v1 * v2
        return Poly({k: v for k, v in out.items() if v})

    __rmul__ = __mul__

    def evaluate(self, point):
        total = 0
        for k, v in self.items():
            term = v
            for f in k:
                term *= point[f]
            total += term
        return total

    def to_model(self, params) -> ScalingModel:
        order = {p: i for i, p in enumerate(params)}
        terms = sorted((k for k in self if k), key=lambda k: (len(k), [order[f] for f in k]))
        terms = [tuple(sorted(k, key=order.__getitem__)) for k in terms]
        weights = [float(self[tuple(sorted(t))]) for t in terms]
        if not terms:
            return ScalingModel.constant_model(float(self.get((), 0)))
        return ScalingModel(tuple(terms), tuple(weights), float(self.get((), 0)))


def _lift(x):
    return x if isinstance(x, Poly) else Poly.const(x)


# --------------------------------------------------------------------------
# graphlet templates
# --------------------------------------------------------------------------

def _g(vertices, edges=()):
    return Graphlet(tuple(enumerate(vertices)), tuple(edges))


G_COND = _g(["load", "alu", "br"], [(0, 1), (1, 2)])
G_INIT = _g(["store", "br"], [(0, 1)])
G_INC = _g(["load", "iadd", "store", "br"], [(0, 1), (1, 2), (2, 3)])
G_END = _g(["br"])
G_RET = _g(["unknown"])


class _Emitter:
    def __init__(self):
        self.blocks: list[int] = []
        self.offsets: list[int] = []
        self.addrs: list[int] = []
        self.kinds: list[int] = []
        self.transitions: Counter = Counter()

    def enter(self, bb, accesses=()):
        if self.blocks:
            self.transitions[(self.blocks[-1], bb)] += 1
        self.blocks.append(bb)
        self.offsets.append(len(self.addrs))
        for addr, kind in accesses:
            self.addrs.append(addr)
            self.kinds.append(kind)


L, S = 0, 1


def _layout(spec: KernelSpec, arrays: list[tuple[str, int]]) -> dict[str, int]:
    bases = dict(spec.layout)
    nxt = STACK_BASE + REGION
    for name, n_elems in arrays:
        if name not in bases:
            bases[name] = nxt
        size = n_elems * spec.element_bytes
        nxt = max(nxt, bases[name] + -(-max(size, 1) // REGION) * REGION)
    return bases


def _stack(slot):
    return STACK_BASE + 4 * slot


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------

MATMUL_BODY = _g(
    ["load", "load", "load",             # i, j, k
     "imul", "iadd", "imul", "iadd", "imul", "iadd",
     "load", "load", "load",             # b[i][j], c[j][k], a[i][k]
     "fmul", "fadd", "store", "br"],
    [(0, 3), (3, 4), (1, 4),
     (1, 5), (5, 6), (2, 6),
     (0, 7), (7, 8), (2, 8),
     (4, 9), (6, 10), (8, 11),
     (9, 12), (10, 12), (12, 13), (11, 13), (13, 14), (8, 14), (14, 15)],
)
MATMUL_INIT_BODY = _g(
    ["load", "load", "imul", "iadd", "store", "br"],
    [(0, 2), (2, 3), (1, 3), (3, 4), (4, 5)],
)


def _matmul(spec: KernelSpec):
    p = spec.params
    square = set(p) == {"n"}
    n = int(p["n"])
    l = n if square else int(p["l"])
    m = n if square else int(p["m"])
    params = ("n",) if square else ("n", "l", "m")
    N = Poly.var("n")
    Lp = N if square else Poly.var("l")
    M = N if square else Poly.var("m")

    labels = [
        "entry", "init.i.cond", "init.i.body", "init.j.cond", "init.j.body",
        "init.j.inc", "init.j.end", "init.i.inc", "init.i.end",
        "mm.i.cond", "mm.i.body", "mm.j.cond", "mm.j.body", "mm.k.cond",
        "mm.k.body", "mm.k.inc", "mm.k.end", "mm.j.inc", "mm.j.end",
        "mm.i.inc", "mm.i.end", "return",
    ]
    graphlets = [
        G_INIT, G_COND, G_INIT, G_COND, MATMUL_INIT_BODY, G_INC, G_END, G_INC, G_INIT,
        G_COND, G_INIT, G_COND, G_INIT, G_COND, MATMUL_BODY, G_INC, G_END, G_INC, G_END,
        G_INC, G_END, G_RET,
    ]
    counts = [
        Poly.const(1), N + 1, N, N * M + N, N * M, N * M, N, N, Poly.const(1),
        N + 1, N, N * Lp + N, N * Lp, N * Lp * M + N * Lp, N * Lp * M, N * Lp * M, N * Lp,
        N * Lp, N, N, Poly.const(1), Poly.const(1),
    ]
    edges = [(0, 1), (1, 2), (1, 8), (2, 3), (3, 4), (3, 6), (4, 5), (5, 3), (6, 7), (7, 1),
             (8, 9), (9, 10), (9, 20), (10, 11), (11, 12), (11, 18), (12, 13), (13, 14),
             (13, 16), (14, 15), (15, 13), (16, 17), (17, 11), (18, 19), (19, 9), (20, 21)]
    eb = spec.element_bytes
    base = _layout(spec, [("a", n * m), ("b", n * l), ("c", l * m)])
    si, sj, sk = _stack(0), _stack(1), _stack(2)

    def emit(e: _Emitter):
        e.enter(0, [(si, S)])
        for i in range(n + 1):
            e.enter(1, [(si, L)])
            if i == n:
                break
            e.enter(2, [(sj, S)])
            for j in range(m + 1):
                e.enter(3, [(sj, L)])
                if j == m:
                    break
                e.enter(4, [(si, L), (sj, L), (base["a"] + (i * m + j) * eb, S)])
                e.enter(5, [(sj, L), (sj, S)])
            e.enter(6)
            e.enter(7, [(si, L), (si, S)])
        e.enter(8, [(si, S)])
        for i in range(n + 1):
            e.enter(9, [(si, L)])
            if i == n:
                break
            e.enter(10, [(sj, S)])
            for j in range(l + 1):
                e.enter(11, [(sj, L)])
                if j == l:
                    break
                e.enter(12, [(sk, S)])
                bij = base["b"] + (i * l + j) * eb
                for k in range(m + 1):
                    e.enter(13, [(sk, L)])
                    if k == m:
                        break
                    aik = base["a"] + (i * m + k) * eb
                    e.enter(14, [(si, L), (sj, L), (sk, L), (bij, L),
                                 (base["c"] + (j * m + k) * eb, L), (aik, L), (aik, S)])
                    e.enter(15, [(sk, L), (sk, S)])
                e.enter(16)
                e.enter(17, [(sj, L), (sj, S)])
            e.enter(18)
            e.enter(19, [(si, L), (si, S)])
        e.enter(20)
        e.enter(21)

    return params, labels, graphlets, counts, edges, emit


STENCIL_BODY = _g(
    ["load", "load", "imul", "iadd",
     "load", "load", "load", "load",
     "fadd", "fadd", "fadd", "fmul", "store", "br"],
    [(0, 2), (2, 3), (1, 3), (3, 4), (3, 5), (3, 6), (3, 7),
     (4, 8), (5, 8), (6, 9), (7, 9), (8, 10), (9, 10), (10, 11), (11, 12), (3, 12), (12, 13)],
)


def _stencil2d(spec: KernelSpec):
    p = spec.params
    n = int(p["n"])
    steps = int(p.get("k", 1))
    params = ("n", "k") if "k" in p else ("n",)
    N = Poly.var("n")
    K = Poly.var("k") if "k" in p else Poly.const(1)
    R = N - 2
    labels = ["entry", "t.cond", "t.body", "i.cond", "i.body", "j.cond", "j.body",
              "j.inc", "j.end", "i.inc", "i.end", "t.inc", "return"]
    graphlets = [G_INIT, G_COND, G_INIT, G_COND, G_INIT, G_COND, STENCIL_BODY,
                 G_INC, G_END, G_INC, G_END, G_INC, G_RET]
    r = max(n - 2, 0)
    if n < 3:
        raise ValueError("stencil2d needs n >= 3")
    counts = [Poly.const(1), K + 1, K, K * R + K, K * R, K * R * R + K * R, K * R * R,
              K * R * R, K * R, K * R, K, K, Poly.const(1)]
    edges = [(0, 1), (1, 2), (1, 12), (2, 3), (3, 4), (3, 10), (4, 5), (5, 6), (5, 8),
             (6, 7), (7, 5), (8, 9), (9, 3), (10, 11), (11, 1)]
    eb = spec.element_bytes
    base = _layout(spec, [("a", n * n), ("b", n * n)])
    st, si, sj = _stack(0), _stack(1), _stack(2)

    def emit(e: _Emitter):
        e.enter(0, [(st, S)])
        src, dst = base["a"], base["b"]
        for t in range(steps + 1):
            e.enter(1, [(st, L)])
            if t == steps:
                break
            e.enter(2, [(si, S)])
            for i in range(1, r + 2):
                e.enter(3, [(si, L)])
                if i == r + 1:
                    break
                e.enter(4, [(sj, S)])
                for j in range(1, r + 2):
                    e.enter(5, [(sj, L)])
                    if j == r + 1:
                        break
                    c = i * n + j
                    e.enter(6, [(si, L), (sj, L),
                                (src + (c - n) * eb, L), (src + (c + n) * eb, L),
                                (src + (c - 1) * eb, L), (src + (c + 1) * eb, L),
                                (dst + c * eb, S)])
                    e.enter(7, [(sj, L), (sj, S)])
                e.enter(8)
                e.enter(9, [(si, L), (si, S)])
            e.enter(10)
            e.enter(11, [(st, L), (st, S)])
            src, dst = dst, src
        e.enter(12)

    return params, labels, graphlets, counts, edges, emit


SAXPY_BODY = _g(
    ["load", "iadd", "load", "load", "fmul", "fadd", "store", "br"],
    [(0, 1), (1, 2), (1, 3), (2, 4), (4, 5), (3, 5), (5, 6), (1, 6), (6, 7)],
)


def _saxpy(spec: KernelSpec):
    n = int(spec.params["n"])
    N = Poly.var("n")
    labels = ["entry", "cond", "body", "inc", "return"]
    graphlets = [G_INIT, G_COND, SAXPY_BODY, G_INC, G_RET]
    counts = [Poly.const(1), N + 1, N, N, Poly.const(1)]
    edges = [(0, 1), (1, 2), (1, 4), (2, 3), (3, 1)]
    eb = spec.element_bytes
    base = _layout(spec, [("x", n), ("y", n)])
    si = _stack(0)

    def emit(e: _Emitter):
        e.enter(0, [(si, S)])
        for i in range(n + 1):
            e.enter(1, [(si, L)])
            if i == n:
                break
            y = base["y"] + i * eb
            e.enter(2, [(si, L), (base["x"] + i * eb, L), (y, L), (y, S)])
            e.enter(3, [(si, L), (si, S)])
        e.enter(4)

    return params_of(spec, ("n",)), labels, graphlets, counts, edges, emit


def params_of(spec, names):
    return tuple(n for n in names if n in spec.params)


_BUILDERS: dict[str, Callable] = {"matmul": _matmul, "stencil2d": _stencil2d, "saxpy": _saxpy}


def generate(spec: KernelSpec, max_accesses: int = MAX_ACCESSES) -> SynthResult:
    """Program model, trace and closed-form block counts for ``spec``."""
    params, labels, graphlets, counts, edges, emit = _BUILDERS[spec.kind](spec)
    point = {k: int(v) for k, v in spec.params.items()}
    expected = sum(c.evaluate(point) * g.memory_ops() for c, g in zip(counts, graphlets))
    if expected > max_accesses:
        raise SizeError(
            f"{spec.kind} with {point} would emit {expected} accesses (limit {max_accesses}); "
            "reduce the sizes"
        )
    e = _Emitter()
    emit(e)
    trace = MemoryTrace.from_arrays(e.blocks, e.offsets, e.addrs, e.kinds)
    observed = Counter(e.blocks)
    out_totals = Counter()
    for (src, _), c in e.transitions.items():
        out_totals[src] += c
    cfg = []
    for src, dst in edges:
        tot = out_totals[src]
        cfg.append(CfgEdge(src, dst, e.transitions[(src, dst)] / tot if tot else None))
    blocks = tuple(
        BasicBlockModel(i, g, int(observed.get(i, 0)), labels[i])
        for i, g in enumerate(graphlets)
    )
    program = ProgramModel(blocks, tuple(cfg), tuple(params), {k: point[k] for k in params})
    truth = {i: c.to_model(params) for i, c in enumerate(counts)}
    return SynthResult(program, trace, truth)

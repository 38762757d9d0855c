"""End-to-end runtime prediction and one-axis sensitivity sweeps."""
from __future__ import annotations

import math
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from .cache import aggregate_profile, effective_memory
from .learn import predict_reuse_profile
from .model import (
    BlockResult,
    EffectiveMemory,
    HardwareConfig,
    PredictionReport,
    ProgramModel,
    ReuseProfile,
    ScalingModel,
    Term,
    round_count,
    term_str,
    validate_hardware,
)
from .pipesim import PipelineBank, block_times

__all__ = [
    "ConfigurationError",
    "UnsupportedFormError",
    "block_counts",
    "predict",
    "RuntimePolynomial",
    "runtime_polynomial",
    "SweepRow",
    "sweep",
    "sweep_axes",
    "apply_axis",
]


class ConfigurationError(ValueError):
    pass


class UnsupportedFormError(ValueError):
    pass


def _same_point(a: Mapping[str, float], b: Mapping[str, float]) -> bool:
    return all(float(a[k]) == float(b.get(k, math.nan)) for k in a)


def block_counts(model: ProgramModel, point: Mapping[str, float]) -> dict[int, int]:
    """N_i for every block at ``point``.

    Literal counts are only valid at the input they were observed at (or when
    the model records no input at all).
    """
    missing = [p for p in model.input_params if p not in point]
    if missing:
        raise ConfigurationError(f"input point lacks parameter(s) {', '.join(missing)}")
    out = {}
    for b in model.blocks:
        c = b.count
        if isinstance(c, ScalingModel):
            out[b.id] = c.predict_count(point)
        elif c is None:
            raise ConfigurationError(f"block {b.id} ({b.label or 'unlabelled'}) has no count source")
        elif model.inputs is None or not model.input_params or _same_point(model.inputs, point):
            out[b.id] = int(c)
        else:
            raise ConfigurationError(
                f"block {b.id} ({b.label or 'unlabelled'}) has a literal count observed at "
                f"{dict(model.inputs)} but no count model for {dict(point)}"
            )
    return out


def _block_profiles(model, point, counts, profiles):
    pairs = []
    for b in model.blocks:
        mem = b.graphlet.memory_ops()
        w = counts[b.id] * mem
        if w == 0:
            continue
        prof = None
        if profiles is not None and b.id in profiles:
            prof = profiles[b.id]
        elif b.reuse is not None:
            prof = predict_reuse_profile(b.reuse, point)
        if prof is None:
            raise ConfigurationError(f"block {b.id} ({b.label or 'unlabelled'}) has memory operations but no reuse profile")
        pairs.append((prof, w))
    return pairs


def predict(
    model: ProgramModel,
    hw: HardwareConfig,
    point: Mapping[str, float] | None = None,
    profiles: Mapping[int, ReuseProfile] | None = None,
) -> PredictionReport:
    """Predicted runtime ``T = sum_i t_i N_i`` with every intermediate.

    ``profiles`` supplies measured per-block reuse profiles; blocks without
    one fall back to their fitted reuse-bin model.
    """
    point = dict(point if point is not None else (model.inputs or {}))
    counts = block_counts(model, point)
    pairs = _block_profiles(model, point, counts, profiles)
    used = [(p, w) for p, w in pairs if p.bins]
    if used:
        agg = aggregate_profile(used)
        mem = effective_memory(agg, hw)
    else:
        # nothing touches memory: report the cold-memory numbers
        agg = ReuseProfile((), 0)
        mem = effective_memory(agg, hw, rates=[0.0] * len(hw.cache_levels))
    bank = PipelineBank.from_hardware(hw, mem)
    times = block_times(model, bank)
    per_block = []
    mix: Counter = Counter()
    for b in model.blocks:
        n = counts[b.id]
        per_block.append(BlockResult(b.id, times[b.id], n, times[b.id] * n))
        if n:
            for _, cls in b.graphlet.vertices:
                mix[cls] += n
    total = math.fsum(r.contribution_s for r in per_block)
    return PredictionReport(
        per_block=tuple(per_block),
        total_runtime_s=total,
        effective_memory=mem,
        aggregate_profile=agg,
        instruction_mix=dict(sorted(mix.items())),
        inputs=point,
        hardware=hw.name,
    )


# --------------------------------------------------------------------------
# symbolic runtime
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RuntimePolynomial:
    """``T`` as a polynomial in the input parameters."""

    params: tuple[str, ...]
    coefficients: tuple[tuple[Term, float], ...]  # () is the constant term

    def evaluate(self, point: Mapping[str, float]) -> float:
        vals = []
        for term, c in self.coefficients:
            v = c
            for f in term:
                v *= float(point[f])
            vals.append(v)
        return math.fsum(vals)

    def monomials(self) -> set[Term]:
        return {t for t, _ in self.coefficients}

    def __str__(self) -> str:
        if not self.coefficients:
            return "0"
        parts = []
        for term, c in self.coefficients:
            s = f"{c:.6g}" if not term else f"{c:.6g}*{term_str(term)}"
            parts.append(s)
        return " + ".join(parts).replace("+ -", "- ")


def runtime_polynomial(model: ProgramModel, times: Mapping[int, float]) -> RuntimePolynomial:
    """Expand ``sum_i t_i N_i`` per monomial (unrounded counts)."""
    order = {p: i for i, p in enumerate(model.input_params)}
    acc: dict[Term, list[float]] = {}
    for b in model.blocks:
        t = float(times[b.id])
        c = b.count
        if isinstance(c, ScalingModel):
            for term, w in zip(c.terms, c.weights):
                if any(f not in order for f in term):
                    raise UnsupportedFormError(
                        f"block {b.id}: term {term_str(term)} is not a polynomial in {list(order)}"
                    )
                key = tuple(sorted(term, key=order.__getitem__))
                acc.setdefault(key, []).append(t * w)
            acc.setdefault((), []).append(t * c.intercept)
        elif c is None:
            raise ConfigurationError(f"block {b.id} has no count source")
        else:
            acc.setdefault((), []).append(t * int(c))
    coeffs = [(k, math.fsum(v)) for k, v in acc.items()]
    coeffs = [(k, v) for k, v in coeffs if v != 0.0]
    coeffs.sort(key=lambda kv: (-len(kv[0]), [order[f] for f in kv[0]]))
    return RuntimePolynomial(tuple(model.input_params), tuple(coeffs))


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------

_AXIS_RE = re.compile(r"^(?:l(\d+)\.size|pipeline\.([a-z_][a-z0-9_]*)|input\.([A-Za-z_]\w*))$")


def sweep_axes(hw: HardwareConfig, model: ProgramModel | None = None) -> list[str]:
    axes = [f"l{i + 1}.size" for i in range(len(hw.cache_levels))]
    axes += ["pipeline.all"] + [f"pipeline.{c}" for c in sorted(hw.pipelines)]
    if model is not None:
        axes += [f"input.{p}" for p in model.input_params]
    return axes


def apply_axis(hw: HardwareConfig, point: Mapping[str, float], axis: str, value):
    """Return ``(hw', point')`` with one parameter changed."""
    m = _AXIS_RE.match(axis)
    if not m:
        raise KeyError(axis)
    level, pipe, param = m.groups()
    point = dict(point)
    if level is not None:
        i = int(level) - 1
        if not 0 <= i < len(hw.cache_levels):
            raise KeyError(axis)
        levels = list(hw.cache_levels)
        levels[i] = replace(levels[i], size_bytes=int(value))
        hw = replace(hw, cache_levels=tuple(levels))
    elif pipe is not None:
        count = int(value)
        if pipe == "all":
            pipes = {c: replace(s, count=count) for c, s in hw.pipelines.items()}
        elif pipe in hw.pipelines:
            pipes = dict(hw.pipelines)
            pipes[pipe] = replace(pipes[pipe], count=count)
        else:
            raise KeyError(axis)
        hw = replace(hw, pipelines=pipes)
    else:
        point[param] = value
    return hw, point


@dataclass(frozen=True)
class SweepRow:
    value: object
    report: PredictionReport | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.report is not None


def sweep(
    model: ProgramModel,
    base_hw: HardwareConfig,
    axis: str,
    values: Sequence,
    point: Mapping[str, float] | None = None,
    profiles: Mapping[int, ReuseProfile] | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """One prediction per value along ``axis``; rows keep the input order.

    Values that produce an invalid configuration become error rows.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    if not _AXIS_RE.match(axis):
        raise KeyError(axis)
    point = dict(point if point is not None else (model.inputs or {}))
    if axis.startswith("input.") and axis[6:] not in model.input_params:
        raise KeyError(axis)

    def one(value) -> SweepRow:
        try:
            hw, pt = apply_axis(base_hw, point, axis, value)
        except (TypeError, ValueError) as exc:
            return SweepRow(value, None, str(exc))
        problems = validate_hardware(hw)
        if problems:
            return SweepRow(value, None, "; ".join(problems))
        try:
            return SweepRow(value, predict(model, hw, pt, profiles))
        except (ConfigurationError, ValueError) as exc:
            return SweepRow(value, None, str(exc))

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, values))
    return [one(v) for v in values]

"""On-disk formats: trace text, program/model JSON, hardware JSON, profile
JSON, report JSON and sweep CSV.

Every writer is deterministic, so write -> read -> write is byte-identical.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from .model import (
    LOAD,
    STORE,
    BasicBlockModel,
    CacheLevel,
    CfgEdge,
    Graphlet,
    HardwareConfig,
    MemoryTrace,
    PipelineSpec,
    PredictionReport,
    ProgramModel,
    RamSpec,
    ReuseBinModel,
    ReuseProfile,
    ScalingModel,
)


class FormatError(ValueError):
    """Malformed input; ``str()`` carries the file location."""


# --------------------------------------------------------------------------
# sizes
# --------------------------------------------------------------------------

_SIZE_RE = re.compile(r"^\s*(\d+)\s*([KkMmGg]?)(?:i?[Bb])?\s*$")
_UNITS = {"": 1, "k": 1 << 10, "m": 1 << 20, "g": 1 << 30}


def parse_size(text) -> int:
    """``"64K"`` -> 65536; suffixes are powers of 1024."""
    if isinstance(text, bool):
        raise FormatError(f"bad size {text!r}")
    if isinstance(text, int):
        return text
    if isinstance(text, float) and text.is_integer():
        return int(text)
    m = _SIZE_RE.match(str(text))
    if not m:
        raise FormatError(f"bad size {text!r}; expected an integer with optional K/M/G suffix")
    return int(m.group(1)) * _UNITS[m.group(2).lower()]


def parse_value(text: str):
    """Sweep / input value: size literal first, then float."""
    try:
        return parse_size(text)
    except FormatError:
        pass
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"bad value {text!r}") from None
    return int(v) if v.is_integer() else v


def parse_assignments(text: str) -> dict[str, Any]:
    """``"n=4096,k=10"`` -> ``{"n": 4096, "k": 10}``."""
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise FormatError(f"bad assignment {part!r}; expected name=value")
        k, v = part.split("=", 1)
        out[k.strip()] = parse_value(v.strip())
    return out


# --------------------------------------------------------------------------
# traces
# --------------------------------------------------------------------------

def write_trace(trace: MemoryTrace, path_or_file) -> None:
    ends = np.append(trace.entry_offsets[1:], len(trace.addresses)).tolist()
    addrs = trace.addresses.tolist()
    kinds = trace.kinds.tolist()
    lines = []
    for b, s, e in zip(trace.entry_blocks.tolist(), trace.entry_offsets.tolist(), ends):
        lines.append(f"B {b}")
        for i in range(s, e):
            lines.append(f"M 0x{addrs[i]:x} {'S' if kinds[i] == STORE else 'L'}")
    text = "\n".join(lines) + ("\n" if lines else "")
    _write_text(path_or_file, text)


def parse_trace(text: str, source: str = "<trace>") -> MemoryTrace:
    blocks, offsets, addrs, kinds = [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "B" and len(parts) == 2:
                bb = int(parts[1])
                if bb < 0:
                    raise ValueError
                blocks.append(bb)
                offsets.append(len(addrs))
            elif tag == "M" and len(parts) == 3 and parts[2] in ("L", "S"):
                if not blocks:
                    raise FormatError(f"{source}:{lineno}: access before the first block entry")
                a = int(parts[1], 16)
                if not 0 <= a < 1 << 64:
                    raise ValueError
                addrs.append(a)
                kinds.append(STORE if parts[2] == "S" else LOAD)
            else:
                raise ValueError
        except FormatError:
            raise
        except ValueError:
            raise FormatError(
                f"{source}:{lineno}: cannot parse {raw.strip()!r}; expected 'B <id>' or 'M <hex> L|S'"
            ) from None
    return MemoryTrace.from_arrays(blocks, offsets, addrs, kinds)


def read_trace(path) -> MemoryTrace:
    return parse_trace(_read_text(path), str(path))


# --------------------------------------------------------------------------
# generic JSON helpers
# --------------------------------------------------------------------------

def _dist(d):
    return "inf" if d == math.inf else int(d)


def _undist(d):
    if d == "inf":
        return math.inf
    if isinstance(d, bool) or not isinstance(d, int):
        raise FormatError(f"bad reuse distance {d!r}")
    return d


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _write_text(path_or_file, text: str) -> None:
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, encoding="utf-8", newline="\n")


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text ({exc})") from None


def _load_json(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


class _Reader:
    """Field access that reports a JSON path on failure."""

    def __init__(self, source: str):
        self.source = source

    def get(self, obj, key, path, kind=None, default=...):
        if not isinstance(obj, dict):
            raise FormatError(f"{self.source}: {path}: expected an object")
        if key not in obj:
            if default is not ...:
                return default
            raise FormatError(f"{self.source}: {path}.{key}: missing field")
        v = obj[key]
        if kind is not None and not _is(v, kind):
            raise FormatError(f"{self.source}: {path}.{key}: expected {kind}, got {type(v).__name__}")
        return v


def _is(v, kind):
    if kind == "int":
        return isinstance(v, int) and not isinstance(v, bool)
    if kind == "number":
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    if kind == "str":
        return isinstance(v, str)
    if kind == "list":
        return isinstance(v, list)
    if kind == "object":
        return isinstance(v, dict)
    return True


# --------------------------------------------------------------------------
# scaling models
# --------------------------------------------------------------------------

def scaling_to_json(m: ScalingModel) -> dict:
    out = {
        "terms": [list(t) for t in m.terms],
        "weights": list(m.weights),
        "intercept": m.intercept,
        "l1_penalty": m.l1_penalty,
    }
    if m.constant:
        out["constant"] = True
    return out


def scaling_from_json(d, r: _Reader, path: str) -> ScalingModel:
    terms = r.get(d, "terms", path, "list")
    weights = r.get(d, "weights", path, "list")
    if len(terms) != len(weights):
        raise FormatError(f"{r.source}: {path}: terms and weights differ in length")
    for i, t in enumerate(terms):
        if not isinstance(t, list) or not all(isinstance(f, str) for f in t):
            raise FormatError(f"{r.source}: {path}.terms[{i}]: expected a list of parameter names")
    if not all(_is(w, "number") for w in weights):
        raise FormatError(f"{r.source}: {path}.weights: expected numbers")
    return ScalingModel(
        tuple(tuple(t) for t in terms),
        tuple(float(w) for w in weights),
        float(r.get(d, "intercept", path, "number")),
        float(r.get(d, "l1_penalty", path, "number", 0.0)),
        bool(r.get(d, "constant", path, default=False)),
    )


def _reuse_to_json(m: ReuseBinModel) -> dict:
    return {
        "nbins": m.nbins,
        "mean_models": [scaling_to_json(x) for x in m.mean_models],
        "inf_count_model": scaling_to_json(m.inf_count_model),
        "finite_count_model": scaling_to_json(m.finite_count_model),
        "anchor_points": [dict(p) for p in m.anchor_points],
        "anchor_shares": [list(s) for s in m.anchor_shares],
    }


def _reuse_from_json(d, r: _Reader, path: str) -> ReuseBinModel:
    return ReuseBinModel(
        nbins=r.get(d, "nbins", path, "int"),
        mean_models=tuple(
            scaling_from_json(x, r, f"{path}.mean_models[{i}]")
            for i, x in enumerate(r.get(d, "mean_models", path, "list"))
        ),
        inf_count_model=scaling_from_json(r.get(d, "inf_count_model", path, "object"), r, f"{path}.inf_count_model"),
        finite_count_model=scaling_from_json(
            r.get(d, "finite_count_model", path, "object"), r, f"{path}.finite_count_model"
        ),
        anchor_points=tuple(dict(p) for p in r.get(d, "anchor_points", path, "list")),
        anchor_shares=tuple(tuple(float(x) for x in s) for s in r.get(d, "anchor_shares", path, "list")),
    )


# --------------------------------------------------------------------------
# program / model
# --------------------------------------------------------------------------

def program_to_json(model: ProgramModel) -> dict:
    blocks = []
    for b in model.blocks:
        e: dict[str, Any] = {"id": b.id}
        if b.label:
            e["label"] = b.label
        e["graphlet"] = {
            "vertices": [[v, c] for v, c in b.graphlet.vertices],
            "edges": [[u, w] for u, w in b.graphlet.edges],
        }
        if isinstance(b.count, ScalingModel):
            e["count"] = {"model": scaling_to_json(b.count)}
        else:
            e["count"] = {"constant": int(b.count)}
        if b.time_s is not None:
            e["time_s"] = b.time_s
        if b.reuse is not None:
            e["reuse"] = _reuse_to_json(b.reuse)
        blocks.append(e)
    edges = []
    for c in model.cfg_edges:
        e = {"src": c.src, "dst": c.dst}
        if c.model is not None:
            e["model"] = scaling_to_json(c.model)
        elif c.prob is not None:
            e["prob"] = c.prob
        edges.append(e)
    out: dict[str, Any] = {"params": list(model.input_params)}
    if model.inputs is not None:
        out["inputs"] = dict(model.inputs)
    out["blocks"] = blocks
    out["cfg_edges"] = edges
    return out


def program_from_json(doc, source: str = "<program>") -> ProgramModel:
    r = _Reader(source)
    params = r.get(doc, "params", "$", "list", [])
    if not all(isinstance(p, str) for p in params):
        raise FormatError(f"{source}: $.params: expected parameter names")
    inputs = r.get(doc, "inputs", "$", "object", None)
    blocks = []
    for i, b in enumerate(r.get(doc, "blocks", "$", "list")):
        path = f"$.blocks[{i}]"
        g = r.get(b, "graphlet", path, "object")
        verts = []
        for j, v in enumerate(r.get(g, "vertices", path + ".graphlet", "list")):
            if not (isinstance(v, list) and len(v) == 2 and _is(v[0], "int") and isinstance(v[1], str)):
                raise FormatError(f"{source}: {path}.graphlet.vertices[{j}]: expected [id, class]")
            verts.append((v[0], v[1]))
        gedges = []
        for j, e in enumerate(r.get(g, "edges", path + ".graphlet", "list", [])):
            if not (isinstance(e, list) and len(e) == 2 and all(_is(x, "int") for x in e)):
                raise FormatError(f"{source}: {path}.graphlet.edges[{j}]: expected [parent, child]")
            gedges.append((e[0], e[1]))
        cnt = r.get(b, "count", path, "object")
        if "model" in cnt:
            count = scaling_from_json(cnt["model"], r, path + ".count.model")
        else:
            count = r.get(cnt, "constant", path + ".count", "int")
        t = r.get(b, "time_s", path, "number", None)
        reuse = b.get("reuse")
        blocks.append(BasicBlockModel(
            id=r.get(b, "id", path, "int"),
            graphlet=Graphlet(tuple(verts), tuple(gedges)),
            count=count,
            label=r.get(b, "label", path, "str", ""),
            time_s=None if t is None else float(t),
            reuse=None if reuse is None else _reuse_from_json(reuse, r, path + ".reuse"),
        ))
    edges = []
    for i, e in enumerate(r.get(doc, "cfg_edges", "$", "list", [])):
        path = f"$.cfg_edges[{i}]"
        m = e.get("model") if isinstance(e, dict) else None
        p = r.get(e, "prob", path, "number", None)
        edges.append(CfgEdge(
            r.get(e, "src", path, "int"),
            r.get(e, "dst", path, "int"),
            None if p is None else float(p),
            None if m is None else scaling_from_json(m, r, path + ".model"),
        ))
    return ProgramModel(tuple(blocks), tuple(edges), tuple(params), None if inputs is None else dict(inputs))


def write_program(model: ProgramModel, path) -> None:
    _write_text(path, dumps(program_to_json(model)))


def read_program(path) -> ProgramModel:
    return program_from_json(_load_json(_read_text(path), str(path)), str(path))


# --------------------------------------------------------------------------
# hardware
# --------------------------------------------------------------------------

def hardware_to_json(hw: HardwareConfig) -> dict:
    return {
        "name": hw.name,
        "clock_hz": hw.clock_hz,
        "pipelines": {
            c: {"count": s.count, "latency_s": s.latency_s, "throughput_s": s.throughput_s}
            for c, s in hw.pipelines.items()
        },
        "cache_levels": [
            {
                "size_bytes": c.size_bytes,
                "line_bytes": c.line_bytes,
                "associativity": c.associativity,
                "latency_s": c.latency_s,
                "bandwidth_s": c.bandwidth_s,
            }
            for c in hw.cache_levels
        ],
        "ram": {"latency_s": hw.ram.latency_s, "bandwidth_s": hw.ram.bandwidth_s, "size_bytes": hw.ram.size_bytes},
    }


def hardware_from_json(doc, source: str = "<hardware>") -> HardwareConfig:
    r = _Reader(source)

    def size(obj, key, path, default=...):
        v = r.get(obj, key, path, default=default)
        try:
            return parse_size(v)
        except FormatError as exc:
            raise FormatError(f"{source}: {path}.{key}: {exc}") from None

    pipes = {}
    for c, s in r.get(doc, "pipelines", "$", "object").items():
        path = f"$.pipelines.{c}"
        pipes[c] = PipelineSpec(
            r.get(s, "count", path, "int", 1),
            float(r.get(s, "latency_s", path, "number")),
            float(r.get(s, "throughput_s", path, "number")),
        )
    levels = []
    for i, c in enumerate(r.get(doc, "cache_levels", "$", "list")):
        path = f"$.cache_levels[{i}]"
        levels.append(CacheLevel(
            size(c, "size_bytes", path),
            size(c, "line_bytes", path),
            r.get(c, "associativity", path, "int"),
            float(r.get(c, "latency_s", path, "number")),
            float(r.get(c, "bandwidth_s", path, "number")),
        ))
    ram = r.get(doc, "ram", "$", "object")
    return HardwareConfig(
        name=r.get(doc, "name", "$", "str", ""),
        clock_hz=float(r.get(doc, "clock_hz", "$", "number")),
        pipelines=pipes,
        cache_levels=tuple(levels),
        ram=RamSpec(
            float(r.get(ram, "latency_s", "$.ram", "number")),
            float(r.get(ram, "bandwidth_s", "$.ram", "number")),
            size(ram, "size_bytes", "$.ram", 0),
        ),
    )


def write_hardware(hw: HardwareConfig, path) -> None:
    _write_text(path, dumps(hardware_to_json(hw)))


def read_hardware(path) -> HardwareConfig:
    return hardware_from_json(_load_json(_read_text(path), str(path)), str(path))


def default_hardware_path() -> Path:
    return Path(__file__).with_name("data") / "xeon_e5_2695.json"


def default_hardware() -> HardwareConfig:
    return read_hardware(default_hardware_path())


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------

def profile_to_json(p: ReuseProfile) -> dict:
    return {"total_accesses": p.total_accesses, "bins": [[_dist(d), q] for d, q in p.bins]}


def profile_from_json(d, r: _Reader, path: str) -> ReuseProfile:
    bins = []
    for i, b in enumerate(r.get(d, "bins", path, "list")):
        if not (isinstance(b, list) and len(b) == 2 and _is(b[1], "number")):
            raise FormatError(f"{r.source}: {path}.bins[{i}]: expected [distance, probability]")
        bins.append((_undist(b[0]), float(b[1])))
    try:
        return ReuseProfile(tuple(bins), r.get(d, "total_accesses", path, "int"))
    except ValueError as exc:
        raise FormatError(f"{r.source}: {path}: {exc}") from None


def profiles_to_json(
    exact: Mapping[int, ReuseProfile],
    binned: Mapping[int, ReuseProfile],
    whole_exact: ReuseProfile,
    whole_binned: ReuseProfile,
    meta: Mapping[str, Any],
) -> dict:
    return {
        **dict(meta),
        "whole_program": {"exact": profile_to_json(whole_exact), "binned": profile_to_json(whole_binned)},
        "blocks": [
            {"id": b, "exact": profile_to_json(exact[b]), "binned": profile_to_json(binned[b])}
            for b in sorted(exact)
        ],
    }


def read_profiles(path, which: str = "exact") -> tuple[dict[int, ReuseProfile], ReuseProfile, dict]:
    """Per-block profiles, the whole-program profile and the metadata."""
    src = str(path)
    doc = _load_json(_read_text(path), src)
    r = _Reader(src)
    blocks = {}
    for i, b in enumerate(r.get(doc, "blocks", "$", "list")):
        path_i = f"$.blocks[{i}]"
        blocks[r.get(b, "id", path_i, "int")] = profile_from_json(r.get(b, which, path_i, "object"), r, f"{path_i}.{which}")
    wp = r.get(doc, "whole_program", "$", "object")
    whole = profile_from_json(r.get(wp, which, "$.whole_program", "object"), r, f"$.whole_program.{which}")
    meta = {k: v for k, v in doc.items() if k not in ("blocks", "whole_program")}
    return blocks, whole, meta


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

REPORT_SCHEMA = {
    "type": "object",
    "required": ["hardware", "inputs", "total_runtime_s", "lambda_eff", "beta_eff", "hit_rates",
                 "per_block", "instruction_mix", "aggregate_profile"],
    "properties": {
        "hardware": {"type": "string"},
        "inputs": {"type": "object", "additionalProperties": {"type": "number"}},
        "total_runtime_s": {"type": "number", "minimum": 0},
        "lambda_eff": {"type": "number", "exclusiveMinimum": 0},
        "beta_eff": {"type": "number", "exclusiveMinimum": 0},
        "hit_rates": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "per_block": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "time_s", "count", "contribution_s"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "time_s": {"type": "number", "minimum": 0},
                    "count": {"type": "integer", "minimum": 0},
                    "contribution_s": {"type": "number", "minimum": 0},
                },
            },
        },
        "instruction_mix": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "aggregate_profile": {
            "type": "object",
            "required": ["total_accesses", "bins"],
            "properties": {"total_accesses": {"type": "integer"}, "bins": {"type": "array"}},
        },
    },
}


def report_to_json(rep: PredictionReport) -> dict:
    return {
        "hardware": rep.hardware,
        "inputs": dict(rep.inputs),
        "total_runtime_s": rep.total_runtime_s,
        "lambda_eff": rep.effective_memory.lambda_eff_s,
        "beta_eff": rep.effective_memory.beta_eff_s,
        "hit_rates": list(rep.hit_rates),
        "per_block": [
            {"id": b.block_id, "time_s": b.time_s, "count": b.count, "contribution_s": b.contribution_s}
            for b in rep.per_block
        ],
        "instruction_mix": dict(rep.instruction_mix),
        "aggregate_profile": profile_to_json(rep.aggregate_profile),
    }


def write_report(rep: PredictionReport, path) -> None:
    _write_text(path, dumps(report_to_json(rep)))


# --------------------------------------------------------------------------
# sweep CSV
# --------------------------------------------------------------------------

SWEEP_HEADER = ("axis_value", "total_runtime_s", "l1_hit", "l2_hit", "l3_hit", "lambda_eff_s")


def sweep_csv(rows: Iterable) -> str:
    """CSV text for sweep rows; failed rows keep their value and leave the
    numeric columns empty, with the reason in an ``error`` column."""
    rows = list(rows)
    with_errors = any(not r.ok for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER + (("error",) if with_errors else ()))
    for r in rows:
        if r.ok:
            rates = list(r.report.hit_rates[:3]) + [""] * max(0, 3 - len(r.report.hit_rates))
            line = [r.value, repr(r.report.total_runtime_s), *[x if x == "" else repr(x) for x in rates],
                    repr(r.report.effective_memory.lambda_eff_s)]
            if with_errors:
                line.append("")
        else:
            line = [r.value, "", "", "", "", "", r.error]
        w.writerow(line)
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))

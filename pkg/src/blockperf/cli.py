"""``blockperf`` command line.

Exit codes: 0 success, 2 usage or parse error, 3 invariant violation,
4 resource guardrail.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import formats
from .formats import FormatError
from .learn import DEFAULT_BIN_DEGREE, DEFAULT_BINS, DEFAULT_DEGREE, DEFAULT_PENALTY, DataError
from .model import ScalingModel, validate_hardware, validate_program
from .pipesim import ConfigError, StructuralError
from .predict import ConfigurationError, UnsupportedFormError, predict, runtime_polynomial, sweep, sweep_axes
from .synth import KINDS, KernelSpec, SizeError, generate
from .trace import EmptyTraceError
from .workflow import StructureMismatch, fit_program, load_observations, profile_trace

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT, EXIT_GUARDRAIL = 0, 2, 3, 4

SYNTH_PARAMS = {"matmul": ("n", "l", "m"), "stencil2d": ("n", "k"), "saxpy": ("n",)}


class Failure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _invariants(problems, what):
    if problems:
        raise Failure(EXIT_INVARIANT, f"{what} is invalid:\n  " + "\n  ".join(problems))


def _program(path):
    model = formats.read_program(path)
    _invariants(validate_program(model), str(path))
    return model


def _hardware(path):
    hw = formats.read_hardware(path) if path else formats.default_hardware()
    _invariants(validate_hardware(hw), str(path or formats.default_hardware_path()))
    return hw


def _write(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8", newline="\n")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_profile(args) -> int:
    program = _program(args.program)
    trace = formats.read_trace(args.trace)
    known = {b.id for b in program.blocks}
    stray = sorted(set(trace.entry_blocks.tolist()) - known)
    if stray:
        raise Failure(EXIT_INVARIANT, f"trace enters block(s) {stray} that the program does not define")
    line = args.line_bytes or None
    ps = profile_trace(trace, args.sample_fraction, args.seed, args.bins, line)
    meta = {"line_bytes": line, "sample_fraction": args.sample_fraction, "seed": args.seed, "bins": args.bins}
    doc = formats.profiles_to_json(ps.exact, ps.binned, ps.whole_exact, ps.whole_binned, meta)
    _write(args.output, formats.dumps(doc))
    print(f"profiled {len(trace)} accesses over {len(ps.exact)} blocks -> {args.output}")
    if args.plot:
        from .plotting import plot_profile

        out = Path(args.output).with_suffix(".png") if args.plot is True else Path(args.plot)
        plot_profile(ps.whole_exact, _hardware(args.hw), out, "whole-program reuse profile")
        print(f"figure -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    obs = load_observations(args.observations)
    for o in obs:
        _invariants(validate_program(o.program), "observation program")
    model = fit_program(obs, args.degree, args.penalty, args.bins, args.reciprocal, args.bin_degree)
    formats.write_program(model, args.output)
    n_const = sum(1 for b in model.blocks if isinstance(b.count, ScalingModel) and b.count.constant)
    print(f"fitted {len(model.blocks)} blocks ({n_const} constant) from {len(obs)} observations -> {args.output}")
    return EXIT_OK


def _profiles(path):
    return formats.read_profiles(path)[0] if path else None


def cmd_predict(args) -> int:
    model = _program(args.model)
    hw = _hardware(args.hw)
    point = formats.parse_assignments(args.input) if args.input else None
    rep = predict(model, hw, point, _profiles(args.profiles))
    if args.report:
        _write(args.report, formats.dumps(formats.report_to_json(rep)))
    print(f"T = {rep.total_runtime_s:.6g} s at {dict(rep.inputs)}")
    rates = ", ".join(f"L{j + 1} {r:.4f}" for j, r in enumerate(rep.hit_rates))
    print(f"hit rates: {rates}; lambda_eff {rep.effective_memory.lambda_eff_s:.4g} s")
    if args.polynomial:
        times = {b.block_id: b.time_s for b in rep.per_block}
        try:
            print(f"T(inputs) = {runtime_polynomial(model, times)}")
        except UnsupportedFormError as exc:
            print(f"no polynomial form: {exc}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    model = _program(args.model)
    hw = _hardware(args.hw)
    axes = sweep_axes(hw, model)
    if args.axis not in axes:
        raise Failure(EXIT_USAGE, f"unknown axis {args.axis!r}; choose one of: {', '.join(axes)}")
    values = [formats.parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise Failure(EXIT_USAGE, "--values is empty")
    point = formats.parse_assignments(args.input) if args.input else None
    rows = sweep(model, hw, args.axis, values, point, _profiles(args.profiles), args.workers)
    text = formats.sweep_csv(rows)
    if args.csv:
        _write(args.csv, text)
    else:
        sys.stdout.write(text)
    for r in rows:
        if not r.ok:
            print(f"warning: {args.axis}={r.value}: {r.error}", file=sys.stderr)
    if args.plot:
        from .plotting import plot_sweep

        if args.plot is True:
            if not args.csv:
                raise Failure(EXIT_USAGE, "--plot without a path needs --csv")
            out = Path(args.csv).with_suffix(".png")
        else:
            out = Path(args.plot)
        plot_sweep(rows, args.axis, out)
        print(f"figure -> {out}", file=sys.stderr)
    return EXIT_OK


def _synth_params(kind, sizes):
    names = SYNTH_PARAMS[kind]
    params = {}
    positional = [s for s in sizes if "=" not in s]
    for s in sizes:
        if "=" in s:
            params.update(formats.parse_assignments(s))
    if len(positional) > len(names):
        raise Failure(EXIT_USAGE, f"{kind} takes at most {len(names)} sizes ({', '.join(names)})")
    for name, s in zip(names, positional):
        params[name] = formats.parse_size(s)
    if kind == "matmul" and set(params) not in ({"n"}, {"n", "l", "m"}):
        raise Failure(EXIT_USAGE, "matmul takes n, or n l m")
    if "n" not in params:
        raise Failure(EXIT_USAGE, f"{kind} needs at least n")
    unknown = set(params) - set(names)
    if unknown:
        raise Failure(EXIT_USAGE, f"{kind} has no parameter(s) {sorted(unknown)}")
    return params


def cmd_synth(args) -> int:
    params = _synth_params(args.kind, args.sizes)
    res = generate(KernelSpec(args.kind, params, args.element_bytes), args.max_accesses)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    formats.write_program(res.program, out / "program.json")
    formats.write_trace(res.trace, out / "trace.txt")
    truth = {str(b): formats.scaling_to_json(m) for b, m in res.ground_truth.items()}
    _write(out / "ground_truth.json", formats.dumps({"params": list(res.program.input_params), "counts": truth}))
    print(f"{args.kind} {params}: {len(res.program.blocks)} blocks, {len(res.trace)} accesses -> {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _fraction(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1]")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blockperf", description="Basic-block performance prediction toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("profile", help="per-block reuse profiles from a memory trace")
    s.add_argument("trace")
    s.add_argument("program")
    s.add_argument("-o", "--output", default="profiles.json")
    s.add_argument("--sample-fraction", type=_fraction, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--line-bytes", type=formats.parse_size, default=64, help="0 keeps raw addresses")
    s.add_argument("--hw", help="hardware file for --plot (default: bundled E5-2695)")
    s.add_argument("--plot", nargs="?", const=True, default=None, help="write a profile figure")
    s.set_defaults(func=cmd_profile)

    s = sub.add_parser("fit", help="fit scaling models from small-input observations")
    s.add_argument("observations", help="directory of runs, each with program.json (+ profiles.json)")
    s.add_argument("-o", "--output", default="model.json")
    s.add_argument("--degree", type=int, default=DEFAULT_DEGREE)
    s.add_argument("--bin-degree", type=int, default=DEFAULT_BIN_DEGREE)
    s.add_argument("--penalty", type=float, default=DEFAULT_PENALTY)
    s.add_argument("--bins", type=int, default=DEFAULT_BINS)
    s.add_argument("--reciprocal", action="store_true", help="add 1/param features")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predict runtime at an input point")
    s.add_argument("model")
    s.add_argument("--hw")
    s.add_argument("--input", help="e.g. n=4096,k=10")
    s.add_argument("--profiles", help="measured profiles.json instead of fitted reuse models")
    s.add_argument("--report", help="write the report JSON here")
    s.add_argument("--polynomial", action="store_true", help="print T as a polynomial in the inputs")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("sweep", help="vary one hardware or input parameter")
    s.add_argument("model")
    s.add_argument("--hw")
    s.add_argument("--axis", required=True, help="l1.size, l2.size, pipeline.<class>, pipeline.all, input.<param>")
    s.add_argument("--values", required=True, help="comma separated, K/M suffixes allowed")
    s.add_argument("--input")
    s.add_argument("--profiles")
    s.add_argument("--csv")
    s.add_argument("--plot", nargs="?", const=True, default=None, help="figure path (default: next to --csv)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("synth", help="generate a synthetic kernel")
    s.add_argument("kind", choices=KINDS)
    s.add_argument("sizes", nargs="+", help="positional sizes or name=value")
    s.add_argument("-o", "--output", default=".")
    s.add_argument("--element-bytes", type=int, default=8)
    s.add_argument("--max-accesses", type=int, default=10_000_000)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARDRAIL
    except (FormatError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, StructuralError, ConfigError, DataError, StructureMismatch,
            UnsupportedFormError, EmptyTraceError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())

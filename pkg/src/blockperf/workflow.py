"""Multi-step stages shared by the CLI and the library: profiling a trace
and fitting a program model from a set of small-input observations."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .formats import FormatError, read_profiles, read_program
from .learn import (
    DEFAULT_BIN_DEGREE,
    DEFAULT_BINS,
    DEFAULT_DEGREE,
    DEFAULT_PENALTY,
    BinnedObservation,
    DataError,
    TrainingSet,
    apply_fitted,
    fit_block_counts,
    fit_branch_probs,
    fit_reuse_bins,
)
from .model import MemoryTrace, ProgramModel, ReuseProfile
from .trace import all_block_profiles, bin_profile, whole_program_profile


class StructureMismatch(ValueError):
    pass


@dataclass(frozen=True)
class ProfileSet:
    exact: dict[int, ReuseProfile]
    binned: dict[int, ReuseProfile]
    whole_exact: ReuseProfile
    whole_binned: ReuseProfile


def profile_trace(
    trace: MemoryTrace,
    sample_fraction: float = 1.0,
    seed: int = 0,
    bins: int = DEFAULT_BINS,
    line_bytes: int | None = 64,
) -> ProfileSet:
    exact = all_block_profiles(trace, sample_fraction, seed, line_bytes)
    whole = whole_program_profile(trace, line_bytes)
    return ProfileSet(
        exact,
        {b: bin_profile(p, bins) for b, p in exact.items()},
        whole,
        bin_profile(whole, bins),
    )


@dataclass(frozen=True)
class Observation:
    program: ProgramModel
    profiles: Mapping[int, ReuseProfile] | None = None

    @property
    def point(self) -> dict:
        return dict(self.program.inputs or {})


def load_observations(root) -> list[Observation]:
    """Every sub-directory of ``root`` holding a ``program.json`` (and
    optionally ``profiles.json``), in name order."""
    root = Path(root)
    if not root.is_dir():
        raise FormatError(f"{root}: not a directory")
    out = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        prog = sub / "program.json"
        if not prog.exists():
            continue
        prof = sub / "profiles.json"
        profiles = read_profiles(prof)[0] if prof.exists() else None
        out.append(Observation(read_program(prog), profiles))
    if not out:
        raise FormatError(f"{root}: no observation directories with a program.json")
    return out


def _check_structure(obs: Sequence[Observation]) -> ProgramModel:
    base = obs[0].program
    for o in obs[1:]:
        p = o.program
        if (
            len(p.blocks) != len(base.blocks)
            or [b.graphlet for b in p.blocks] != [b.graphlet for b in base.blocks]
            or [(e.src, e.dst) for e in p.cfg_edges] != [(e.src, e.dst) for e in base.cfg_edges]
            or p.input_params != base.input_params
        ):
            raise StructureMismatch("observations disagree on program structure")
        if p.inputs is None:
            raise StructureMismatch("every observation must record the input point it was run at")
    if base.inputs is None:
        raise StructureMismatch("every observation must record the input point it was run at")
    return base


def fit_program(
    obs: Sequence[Observation],
    degree: int = DEFAULT_DEGREE,
    penalty: float = DEFAULT_PENALTY,
    bins: int = DEFAULT_BINS,
    reciprocal: bool = False,
    bin_degree: int = DEFAULT_BIN_DEGREE,
) -> ProgramModel:
    """Count, branch-probability and reuse-bin models for every block.

    Reuse models use their own (lower) degree: bin means of line-granular
    profiles are only approximately polynomial at small inputs, and a cubic
    through four points extrapolates that rounding wildly.
    """
    base = _check_structure(obs)
    points = [o.point for o in obs]
    count_obs = {
        b.id: TrainingSet.of(points, [float(o.program.blocks[b.id].count) for o in obs])
        for b in base.blocks
    }
    counts = fit_block_counts(base, count_obs, degree, penalty, reciprocal)

    branch_obs = {}
    for j, e in enumerate(base.cfg_edges):
        pts, vals = [], []
        for o in obs:
            p = o.program.cfg_edges[j].prob
            if p is not None:
                pts.append(o.point)
                vals.append(p)
        if len({tuple(sorted(p.items())) for p in pts}) >= 2:
            branch_obs[(e.src, e.dst)] = TrainingSet.of(pts, vals)
    branches = fit_branch_probs(branch_obs, base.input_params, degree, penalty, reciprocal)

    reuse = {}
    if all(o.profiles is not None for o in obs):
        for b in base.blocks:
            if b.graphlet.memory_ops() == 0:
                continue
            binned = [
                BinnedObservation.from_profile(o.point, o.profiles[b.id], bins)
                for o in obs
                if b.id in o.profiles and o.profiles[b.id].bins
            ]
            if len({tuple(sorted(x.point.items())) for x in binned}) < 2:
                continue
            try:
                reuse[b.id] = fit_reuse_bins(binned, base.input_params, bin_degree, penalty)
            except DataError as exc:
                raise DataError(f"block {b.id}: {exc}") from exc
    return apply_fitted(base, counts, branches, reuse)

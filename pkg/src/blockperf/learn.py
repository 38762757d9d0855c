"""L1-regularised multi-linear regression of block counts, branch
probabilities and binned reuse distances as functions of program inputs."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import (
    CfgEdge,
    ProgramModel,
    ReuseBinModel,
    ReuseProfile,
    ScalingModel,
    Term,
    term_value,
)
from .trace import equal_mass_bins

try:  # pragma: no cover
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

DEFAULT_DEGREE = 3
DEFAULT_PENALTY = 1e-6
DEFAULT_BINS = 40
DEFAULT_BIN_DEGREE = 2
TOL = 1e-10
MAX_SWEEPS = 100_000
PATH_STEPS = 60
PATH_FLOOR = 1e-12


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingSet:
    points: tuple[Mapping[str, float], ...]
    targets: tuple[float, ...]

    def __post_init__(self):
        if len(self.points) != len(self.targets):
            raise DataError("points and targets differ in length")
        if not all(math.isfinite(t) for t in self.targets):
            raise DataError("training targets must be finite")
        distinct = {tuple(sorted(p.items())) for p in self.points}
        if len(distinct) < 2:
            raise DataError("need at least 2 distinct input points")

    @classmethod
    def of(cls, points, targets) -> "TrainingSet":
        return cls(tuple(dict(p) for p in points), tuple(float(t) for t in targets))


def build_features(params: Sequence[str], max_degree: int, reciprocal: bool = False) -> list[Term]:
    """All monomials of total degree <= ``max_degree``, intercept first,
    graded by degree and then by the order of ``params``."""
    if max_degree < 1:
        raise ValueError("max_degree must be >= 1")
    out: list[Term] = []
    for deg in range(max_degree + 1):
        out.extend(tuple(c) for c in itertools.combinations_with_replacement(params, deg))
    if reciprocal:
        out.extend((f"1/{p}",) for p in params)
    return out


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

def _cd_py(gram, corr, b, lam_half, tol, max_sweeps):
    p = gram.shape[0]
    b = b.copy()
    grad = corr - gram @ b
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_delta = 0.0
        max_b = 0.0
        for j in range(p):
            rho = grad[j] + gram[j, j] * b[j]
            if rho > lam_half[j]:
                new = (rho - lam_half[j]) / gram[j, j]
            elif rho < -lam_half[j]:
                new = (rho + lam_half[j]) / gram[j, j]
            else:
                new = 0.0
            delta = new - b[j]
            if delta != 0.0:
                for k in range(p):
                    grad[k] -= gram[k, j] * delta
                b[j] = new
            if abs(delta) > max_delta:
                max_delta = abs(delta)
            if abs(new) > max_b:
                max_b = abs(new)
        if max_delta <= tol * (1.0 + max_b):
            break
    return b, sweeps


_cd_kernel = njit(cache=True)(_cd_py) if njit else _cd_py


def _lasso_path(gram, corr, lam, w, tol, max_sweeps, n_steps=PATH_STEPS):
    """Warm-started descent along a geometric penalty path ending at ``lam``.

    ``w`` holds the per-coordinate penalty weights.

    Walking down from the smallest penalty that zeroes every coefficient lets
    strongly correlated terms enter first, which keeps exactly collinear
    designs from drifting into null-space combinations.
    """
    lam_max = 2.0 * float(np.max(np.abs(corr) / w))
    b = np.zeros(len(corr))
    if lam_max == 0.0:
        return b
    floor = lam_max * PATH_FLOOR
    path = []
    if lam < lam_max:
        path = list(np.geomspace(lam_max, max(lam, floor), n_steps))
        if lam < floor:
            path.append(lam)
    else:
        path = [lam]
    for step in path:
        b, _ = _cd_kernel(gram, corr, b, 0.5 * step * w, tol, max_sweeps)
    return b


def _polish(z, yc, b, lam, w):
    """Exact lasso solution for the active set and signs found by descent.

    Returns None when the candidate violates the optimality conditions.
    """
    support = np.flatnonzero(b)
    if len(support) == 0:
        return None
    zs = z[:, support]
    u, s, vt = np.linalg.svd(zs, full_matrices=False)
    keep = s > s[0] * 1e-13
    u, s, vt = u[:, keep], s[keep], vt[keep]
    beta = vt.T @ ((u.T @ yc) / s)
    if lam > 0:
        signs = np.sign(b[support])
        beta -= 0.5 * lam * (vt.T @ ((vt @ (signs * w[support])) / s**2))
        if np.any(np.sign(beta) != signs):
            return None
    cand = np.zeros_like(b)
    cand[support] = beta
    grad = z.T @ (yc - z @ cand)
    scale = 1e-9 * (1.0 + float(np.abs(z.T @ yc).max()))
    if lam > 0 and np.any(np.abs(grad[support] - 0.5 * lam * w[support] * np.sign(beta)) > scale):
        return None  # rank-deficient active set: pseudo-inverse is not the lasso optimum
    inactive = np.setdiff1d(np.arange(len(b)), support)
    if len(inactive) and np.any(np.abs(grad[inactive]) > 0.5 * lam * w[inactive] + scale):
        return None
    return cand


def _certified(z, yc, b, lam, w):
    """Replace the descent iterate by an exact optimum when one can be certified,
    trying the full active set first and then sets pruned of negligible terms."""
    top = float(np.abs(b).max()) if len(b) else 0.0
    for rel in (0.0, 1e-9, 1e-6):
        trial = np.where(np.abs(b) > rel * top, b, 0.0)
        polished = _polish(z, yc, trial, lam, w)
        if polished is not None:
            return polished
    return b


def fit(
    training: TrainingSet,
    features: Sequence[Term],
    l1_penalty: float = DEFAULT_PENALTY,
    tol: float = TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> ScalingModel:
    """Minimise ``sum (y - model)^2 + l1_penalty * sum |alpha|``.

    Features are standardised internally and the penalty applies to the
    standardised coefficients, so no term is favoured by its units; weights
    are reported on the raw scale.
    """
    if l1_penalty < 0:
        raise ValueError("l1_penalty must be nonnegative")
    terms = [tuple(t) for t in features if len(t)]
    y = np.asarray(training.targets, dtype=float)
    n = len(y)
    if not terms:
        return ScalingModel((), (), float(np.mean(y)), l1_penalty)
    x = np.array([[term_value(t, p) for t in terms] for p in training.points], dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("feature evaluation produced non-finite values")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    live = sigma > 1e-12 * np.maximum(1.0, np.abs(mu))
    y_mean = float(y.mean())
    yc = y - y_mean
    weights = np.zeros(len(terms))
    if live.any() and np.any(yc != 0):
        z = (x[:, live] - mu[live]) / sigma[live]
        gram = z.T @ z
        corr = z.T @ yc
        w = np.ones(z.shape[1])  # uniform penalty on the standardised scale
        b = _lasso_path(gram, corr, l1_penalty, w, tol, max_sweeps)
        b = _certified(z, yc, b, l1_penalty, w)
        weights[live] = b / sigma[live]
    intercept = y_mean - float(weights @ mu)
    weights[weights == 0.0] = 0.0  # drop negative zeros
    return ScalingModel(tuple(terms), tuple(float(w) for w in weights), float(intercept), float(l1_penalty))


def _constant_if_flat(training: TrainingSet) -> ScalingModel | None:
    t = training.targets
    if all(v == t[0] for v in t):
        return ScalingModel.constant_model(t[0])
    return None


def fit_block_counts(
    model: ProgramModel,
    observations: Mapping[int, TrainingSet],
    degree: int = DEFAULT_DEGREE,
    penalty: float = DEFAULT_PENALTY,
    reciprocal: bool = False,
    feature_override: Mapping[int, Sequence[Term]] | None = None,
) -> dict[int, ScalingModel]:
    """One count model per block; blocks with input-invariant counts get a
    constant model without fitting."""
    features = build_features(model.input_params, degree, reciprocal)
    out = {}
    for b in model.blocks:
        if b.id not in observations:
            raise DataError(f"block {b.id}: no observations")
        ts = observations[b.id]
        if any(v < 0 for v in ts.targets):
            raise DataError(f"block {b.id}: counts must be nonnegative")
        const = _constant_if_flat(ts)
        if const is not None:
            out[b.id] = const
            continue
        feats = feature_override.get(b.id, features) if feature_override else features
        try:
            out[b.id] = fit(ts, feats, penalty)
        except DataError as exc:
            raise DataError(f"block {b.id}: {exc}") from exc
    return out


def fit_branch_probs(
    observations: Mapping[tuple[int, int], TrainingSet],
    params: Sequence[str],
    degree: int = DEFAULT_DEGREE,
    penalty: float = DEFAULT_PENALTY,
    reciprocal: bool = False,
) -> dict[tuple[int, int], ScalingModel]:
    features = build_features(params, degree, reciprocal)
    out = {}
    for edge, ts in observations.items():
        const = _constant_if_flat(ts)
        if const is not None:
            out[edge] = const
            continue
        try:
            out[edge] = fit(ts, features, penalty)
        except DataError as exc:
            raise DataError(f"edge {edge}: {exc}") from exc
    return out


def predict_branch_probs(
    models: Mapping[tuple[int, int], ScalingModel], point: Mapping[str, float]
) -> dict[tuple[int, int], float]:
    """Evaluate, clamp to [0, 1] and renormalise each block's outgoing edges."""
    raw = {e: min(1.0, max(0.0, m.evaluate(point))) for e, m in models.items()}
    by_src: dict[int, list[tuple[int, int]]] = {}
    for e in raw:
        by_src.setdefault(e[0], []).append(e)
    out = {}
    for src, edges in by_src.items():
        s = math.fsum(raw[e] for e in edges)
        for e in edges:
            out[e] = raw[e] / s if s > 0 else 1.0 / len(edges)
    return out


# --------------------------------------------------------------------------
# reuse bins
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BinnedObservation:
    """Equal-mass binned reuse profile of one block at one input point."""

    point: Mapping[str, float]
    means: tuple[float, ...]
    inf_probability: float
    total_accesses: int

    @classmethod
    def from_profile(cls, point, profile: ReuseProfile, nbins: int = DEFAULT_BINS) -> "BinnedObservation":
        means, inf_p = equal_mass_bins(profile, nbins)
        return cls(dict(point), tuple(float(m) for m in means), float(inf_p), profile.total_accesses)

    @property
    def nbins(self) -> int:
        return len(self.means) + 1


def fit_reuse_bins(
    observations: Sequence[BinnedObservation],
    params: Sequence[str],
    degree: int = DEFAULT_BIN_DEGREE,
    penalty: float = DEFAULT_PENALTY,
) -> ReuseBinModel:
    """One model per finite bin predicting its mean distance, plus count models
    for the compulsory and finite accesses.  Bins whose mean does not change
    with the input are passed through as constants."""
    if not observations:
        raise DataError("no binned profiles")
    nbins = observations[0].nbins
    if any(o.nbins != nbins for o in observations):
        raise DataError("binned profiles have different bin counts")
    points = [o.point for o in observations]
    features = build_features(params, degree)

    def model_for(values):
        ts = TrainingSet.of(points, values)
        return _constant_if_flat(ts) or fit(ts, features, penalty)

    means = []
    for j in range(nbins - 1):
        means.append(model_for([o.means[j] for o in observations]))
    inf_counts = [o.inf_probability * o.total_accesses for o in observations]
    fin_counts = [o.total_accesses - c for o, c in zip(observations, inf_counts)]
    shares = tuple(tuple([1.0 / (nbins - 1)] * (nbins - 1)) for _ in observations)
    return ReuseBinModel(
        nbins=nbins,
        mean_models=tuple(means),
        inf_count_model=model_for(inf_counts),
        finite_count_model=model_for(fin_counts),
        anchor_points=tuple(dict(p) for p in points),
        anchor_shares=shares,
    )


def _nearest(points: Sequence[Mapping[str, float]], query: Mapping[str, float]) -> int:
    best, best_d = 0, math.inf
    for i, p in enumerate(points):
        d = math.fsum((float(p[k]) - float(query[k])) ** 2 for k in p if k in query)
        if d < best_d:
            best, best_d = i, d
    return best


def predict_reuse_profile(rbm: ReuseBinModel, point: Mapping[str, float]) -> ReuseProfile:
    """Extrapolated block reuse profile at ``point``."""
    n_inf = max(0.0, rbm.inf_count_model.evaluate(point))
    n_fin = max(0.0, rbm.finite_count_model.evaluate(point))
    total = n_inf + n_fin
    if total <= 0:
        return ReuseProfile((), 0)
    p_inf = n_inf / total
    shares = rbm.anchor_shares[_nearest(rbm.anchor_points, point)]
    mass: dict[float, float] = {}
    if p_inf < 1.0:
        s_tot = math.fsum(shares)
        for m, sh in zip(rbm.mean_models, shares):
            d = math.floor(max(0.0, m.evaluate(point)) + 0.5)
            mass[d] = mass.get(d, 0.0) + (1.0 - p_inf) * sh / s_tot
    if p_inf > 0:
        mass[math.inf] = p_inf
    return ReuseProfile.from_counts(mass, total=round(total))


def apply_fitted(
    model: ProgramModel,
    counts: Mapping[int, ScalingModel],
    branches: Mapping[tuple[int, int], ScalingModel] | None = None,
    reuse: Mapping[int, ReuseBinModel] | None = None,
) -> ProgramModel:
    """Copy of ``model`` with count/branch/reuse models attached."""
    from dataclasses import replace

    blocks = tuple(
        replace(b, count=counts.get(b.id, b.count), reuse=(reuse or {}).get(b.id, b.reuse))
        for b in model.blocks
    )
    edges = tuple(
        CfgEdge(e.src, e.dst, None, branches[(e.src, e.dst)]) if branches and (e.src, e.dst) in branches else e
        for e in model.cfg_edges
    )
    return replace(model, blocks=blocks, cfg_edges=edges, inputs=None)

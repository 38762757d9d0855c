import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from blockperf.cache import effective_memory, hit_given_distance
from blockperf.learn import ScalingModel, TrainingSet, build_features, fit, predict_branch_probs
from blockperf.model import INF, Graphlet, MemoryTrace, ReuseProfile
from blockperf.pipesim import PipelineBank, Pool, simulate_graphlet
from blockperf.trace import bin_profile, reuse_distances, whole_program_profile
from oracles import list_schedule, naive_reuse_distances

SETTINGS = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@SETTINGS
@given(st.lists(st.integers(0, 15), min_size=1, max_size=200))
def test_reuse_matches_naive(seq):
    got = reuse_distances(np.array(seq, dtype=np.uint64)).tolist()
    assert got == [-1 if x is None else x for x in naive_reuse_distances(seq)]


@SETTINGS
@given(st.lists(st.integers(0, 1 << 20), min_size=1, max_size=300))
def test_whole_profile_sums_to_one(addrs):
    t = MemoryTrace.from_arrays([0], [0], addrs, [0] * len(addrs))
    p = whole_program_profile(t, 64)
    assert abs(math.fsum(q for _, q in p.bins) - 1) < 1e-12
    assert p.total_accesses == len(addrs)
    # the first touch of every distinct line is cold
    lines = len({a // 64 for a in addrs})
    assert abs(p.inf_probability * len(addrs) - lines) < 1e-9


@st.composite
def profiles(draw):
    ds = sorted(set(draw(st.lists(st.integers(0, 10_000), min_size=1, max_size=60))))
    ws = draw(st.lists(st.integers(1, 50), min_size=len(ds), max_size=len(ds)))
    counts = dict(zip(ds, ws))
    if draw(st.booleans()):
        counts[INF] = draw(st.integers(1, 50))
    return ReuseProfile.from_counts(counts)


@SETTINGS
@given(profiles(), st.integers(2, 40))
def test_binning_conserves_mass_and_inf(p, nbins):
    b = bin_profile(p, nbins)
    assert len(b.bins) <= max(nbins, len(p.bins) if len(p.bins) <= nbins else 0)
    assert abs(math.fsum(q for _, q in b.bins) - 1.0) <= 1e-12
    assert b.inf_probability == p.inf_probability
    assert b.total_accesses == p.total_accesses


@SETTINGS
@given(profiles())
def test_effective_latency_between_fastest_and_ram(hw, p):
    m = effective_memory(p, hw)
    lo = hw.cache_levels[0].latency_s
    assert lo * (1 - 1e-12) <= m.lambda_eff_s <= hw.ram.latency_s * (1 + 1e-12)
    assert all(0.0 <= h <= 1.0 for h in m.hit_rates)


@SETTINGS
@given(st.integers(0, 5000), st.sampled_from([(1, 64), (4, 64), (8, 512), (16, 1024)]))
def test_hit_probability_in_unit_interval(d, ab):
    a, b = ab
    h = hit_given_distance(d, a, b)
    assert 0.0 <= h <= 1.0
    assert hit_given_distance(d + 1, a, b) <= h + 1e-15


CLASSES = ["iadd", "fmul", "load"]


@st.composite
def dags(draw):
    n = draw(st.integers(1, 8))
    verts = tuple((i, draw(st.sampled_from(CLASSES))) for i in range(n))
    edges = tuple(
        (u, w) for u in range(n) for w in range(u + 1, n) if draw(st.integers(0, 3)) == 0
    )
    pools = {}
    for c in CLASSES:
        thr = draw(st.sampled_from([0.5, 1.0, 2.0]))
        lat = thr * draw(st.integers(1, 4))
        pools[c] = (lat, thr, draw(st.integers(1, 3)))
    return Graphlet(verts, edges), pools


@SETTINGS
@given(dags())
def test_simulator_matches_oracle(case):
    g, pools = case
    bank = PipelineBank({c: Pool(*v) for c, v in pools.items()}, {c: c for c in pools})
    assert simulate_graphlet(g, bank).time_s == list_schedule(list(g.vertices), list(g.edges), pools, {c: c for c in pools})


@SETTINGS
@given(
    st.dictionaries(
        st.sampled_from([("n",), ("k",), ("n", "n"), ("n", "k"), ("k", "k"), ("n", "n", "k")]),
        st.integers(-5, 5).filter(bool),
        min_size=1, max_size=3,
    ),
    st.integers(-5, 5),
)
def test_exact_polynomials_recovered(terms, c0):
    pts = [{"n": n, "k": k} for n in range(1, 7) for k in range(1, 7)]

    def f(p):
        return c0 + sum(w * math.prod(p[x] for x in t) for t, w in terms.items())

    m = fit(TrainingSet.of(pts, [f(p) for p in pts]), build_features(["n", "k"], 3), 1e-8)
    for p in ({"n": 50, "k": 9}, {"n": 200, "k": 3}):
        assert abs(m.evaluate(p) - f(p)) <= 1e-5 * max(1.0, abs(f(p)))


@SETTINGS
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(1, 10_000))
def test_branch_probabilities_clamped(a, b, n):
    models = {(0, 1): ScalingModel((("n",),), (a,), b), (0, 2): ScalingModel((), (), 0.5)}
    pred = predict_branch_probs(models, {"n": n})
    assert all(0.0 <= v <= 1.0 for v in pred.values())
    assert abs(math.fsum(pred.values()) - 1.0) <= 1e-12 or math.fsum(pred.values()) == 0.0

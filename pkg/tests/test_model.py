import math
from dataclasses import replace

import numpy as np
import pytest

from blockperf.model import (
    BasicBlockModel,
    CacheLevel,
    CfgEdge,
    Graphlet,
    MemoryTrace,
    ProgramModel,
    ReuseProfile,
    ScalingModel,
    round_count,
    validate_hardware,
    validate_program,
)
from blockperf.synth import KernelSpec, generate


def test_sample_hardware_is_valid(hw):
    assert validate_hardware(hw) == []
    assert hw.clock_hz == 2.1e9
    assert [c.size_bytes for c in hw.cache_levels] == [64 << 10, 256 << 10, 46080 << 10]
    assert [c.associativity for c in hw.cache_levels] == [8, 8, 20]
    assert hw.pipelines["iadd"].latency_s == 1.04e-9


def test_l2_smaller_than_l1_is_one_ordering_violation(hw):
    levels = list(hw.cache_levels)
    levels[1] = replace(levels[1], size_bytes=32 << 10)
    problems = validate_hardware(replace(hw, cache_levels=tuple(levels)))
    assert len(problems) == 1
    assert "strictly increasing size" in problems[0]


def test_zero_associativity_is_one_violation(hw):
    levels = list(hw.cache_levels)
    levels[0] = replace(levels[0], associativity=0)
    problems = validate_hardware(replace(hw, cache_levels=tuple(levels)))
    assert len(problems) == 1
    assert "associativity" in problems[0]


def test_missing_fallback_class(hw):
    pipes = {k: v for k, v in hw.pipelines.items() if k != "unknown"}
    problems = validate_hardware(replace(hw, pipelines=pipes))
    assert any("unknown" in p for p in problems)


def test_latency_below_throughput_rejected(hw):
    pipes = dict(hw.pipelines)
    pipes["iadd"] = replace(pipes["iadd"], latency_s=0.1e-9)
    assert len(validate_hardware(replace(hw, pipelines=pipes))) == 1


def test_line_size_must_divide(hw):
    levels = list(hw.cache_levels)
    levels[0] = CacheLevel(65536 + 8, 64, 8, 1e-9, 1e-9)
    assert any("line_bytes" in p for p in validate_hardware(replace(hw, cache_levels=tuple(levels))))


def test_matmul_cfg_validates():
    res = generate(KernelSpec("matmul", {"n": 3}))
    assert len(res.program.blocks) == 22
    assert all(e.prob is not None for e in res.program.cfg_edges if e.src != 21)
    assert validate_program(res.program) == []


def _one_block(graphlet, edges=()):
    return ProgramModel((BasicBlockModel(0, graphlet, 1),), tuple(edges))


def test_self_edge_is_cycle():
    g = Graphlet(((0, "iadd"),), ((0, 0),))
    problems = validate_program(_one_block(g))
    assert len(problems) == 1 and "cycle" in problems[0]
    assert g.topological_order() is None


def test_probability_sum_violation():
    g = Graphlet(((0, "br"),))
    blocks = tuple(BasicBlockModel(i, g, 1) for i in range(3))
    m = ProgramModel(blocks, (CfgEdge(0, 1, 0.6), CfgEdge(0, 2, 0.6)))
    problems = validate_program(m)
    assert len(problems) == 1 and "sum" in problems[0]


def test_dangling_ids():
    g = Graphlet(((0, "br"),), ((0, 5),))
    m = ProgramModel((BasicBlockModel(0, g, 1),), (CfgEdge(0, 3, 1.0),))
    assert len(validate_program(m)) == 2


def test_topological_order_iff_no_cycle():
    g = Graphlet(((0, "load"), (1, "iadd"), (2, "store")), ((0, 1), (1, 2)))
    assert g.topological_order() == [0, 1, 2]
    assert validate_program(_one_block(g)) == []
    g2 = replace(g, edges=g.edges + ((2, 0),))
    assert g2.topological_order() is None
    assert any("cycle" in p for p in validate_program(_one_block(g2)))


@pytest.mark.parametrize("v,expected", [(0.5, 1), (1.49, 1), (2.5, 3), (-3.2, 0), (7.0, 7)])
def test_round_count(v, expected):
    assert round_count(v) == expected


def test_round_count_rejects_nan():
    with pytest.raises(ValueError):
        round_count(math.nan)


def test_scaling_model():
    m = ScalingModel((("n", "n"), ("n",)), (1.0, -3.0), 2.0)
    assert m.evaluate({"n": 4096}) == 16764930
    assert m.predict_count({"n": 1}) == 0
    assert str(m) == "1*n^2 + -3*n + 2"
    c = ScalingModel.constant_model(7)
    assert c.constant and c.evaluate({"n": 99}) == 7


def test_reuse_profile_invariants():
    ReuseProfile(((0, 0.5), (3, 0.25), (math.inf, 0.25)), 4)
    with pytest.raises(ValueError):
        ReuseProfile(((0, 0.5), (3, 0.4)), 4)
    with pytest.raises(ValueError):
        ReuseProfile(((3, 0.5), (0, 0.5)), 4)
    with pytest.raises(ValueError):
        ReuseProfile(((1.5, 1.0),), 1)
    p = ReuseProfile.from_counts({math.inf: 3, 0: 1})
    assert p.bins == ((0, 0.25), (math.inf, 0.75)) and p.total_accesses == 4
    assert p.inf_probability == 0.75


def test_memory_trace_from_records():
    t = MemoryTrace.from_records([("B", 0), ("M", 16, "L"), ("M", 32, "S"), ("B", 1), ("B", 0), ("M", 16, "L")])
    assert len(t) == 3 and t.n_records == 6
    assert t.access_blocks().tolist() == [0, 0, 0]
    assert t.block_counts() == {0: 2, 1: 1}
    assert t.kinds.tolist() == [0, 1, 0]
    with pytest.raises(ValueError):
        t.addresses[0] = 1
    with pytest.raises(ValueError):
        MemoryTrace.from_records([("M", 16, "L")])


def test_memory_trace_equality():
    a = MemoryTrace.from_arrays([0], [0], [1, 2], [0, 0])
    b = MemoryTrace.from_arrays(np.array([0]), [0], [1, 2], [0, 0])
    assert a == b
    assert a != MemoryTrace.from_arrays([0], [0], [1, 3], [0, 0])

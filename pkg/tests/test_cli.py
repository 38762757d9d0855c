import json

import pytest

from blockperf import formats
from blockperf.cli import main
from blockperf.model import BasicBlockModel, Graphlet, ProgramModel
from oracles import JACOBI


def _synth(tmp_path, name, *args):
    out = tmp_path / name
    assert main(["synth", *args, "-o", str(out)]) == 0
    return out


def test_synth_writes_three_files(tmp_path):
    out = _synth(tmp_path, "mm", "matmul", "2", "2", "2")
    assert sorted(p.name for p in out.iterdir()) == ["ground_truth.json", "program.json", "trace.txt"]
    lines = (out / "trace.txt").read_text().splitlines()
    assert len(lines) == 230
    assert sum(1 for x in lines if x.startswith("M ")) == 148
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["params"] == ["n", "l", "m"]


def test_synth_errors(tmp_path, capsys):
    assert main(["synth", "fft", "4", "-o", str(tmp_path)]) == 2
    assert main(["synth", "matmul", "2", "3", "-o", str(tmp_path)]) == 2
    assert main(["synth", "matmul", "300", "-o", str(tmp_path)]) == 4
    assert "reduce" in capsys.readouterr().err


def test_profile_is_deterministic_and_recomposes(tmp_path):
    out = _synth(tmp_path, "st", "stencil2d", "n=12", "k=2")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["profile", str(out / "trace.txt"), str(out / "program.json"), "-o", str(p),
                     "--sample-fraction", "0.01", "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()
    full = tmp_path / "full.json"
    main(["profile", str(out / "trace.txt"), str(out / "program.json"), "-o", str(full)])
    blocks, whole, meta = formats.read_profiles(full)
    assert meta["sample_fraction"] == 1.0
    acc = {}
    for p in blocks.values():
        for d, q in p.bins:
            acc[d] = acc.get(d, 0.0) + q * p.total_accesses
    for d, q in whole.bins:
        assert acc[d] / whole.total_accesses == pytest.approx(q, abs=1e-12)


def test_missing_files_exit_2(tmp_path, capsys):
    assert main(["profile", str(tmp_path / "nope.txt"), str(tmp_path / "nope.json")]) == 2
    assert main(["predict", str(tmp_path / "nope.json")]) == 2
    assert "no such file" in capsys.readouterr().err


def test_bad_sample_fraction_is_usage_error(tmp_path):
    assert main(["profile", "t", "p", "--sample-fraction", "0"]) == 2


def test_profile_rejects_unknown_block(tmp_path):
    out = _synth(tmp_path, "sx", "saxpy", "3")
    (tmp_path / "t.txt").write_text("B 0\nB 99\nM 0x0 L\n")
    assert main(["profile", str(tmp_path / "t.txt"), str(out / "program.json"), "-o", str(tmp_path / "p.json")]) == 3


def _jacobi_observations(root):
    br = Graphlet(((0, "br"),))
    for n in (4, 6, 8, 10, 12):
        for k in (1, 2, 3, 4):
            blocks = tuple(BasicBlockModel(i, br, round(f(n, k)), f"bb{i + 1}") for i, (f, _, _) in enumerate(JACOBI))
            blocks += (BasicBlockModel(len(JACOBI), br, 1, "entry"),)
            d = root / f"n{n:02d}_k{k}"
            d.mkdir(parents=True)
            formats.write_program(ProgramModel(blocks, (), ("n", "k"), {"n": n, "k": k}), d / "program.json")


def test_fit_recovers_counts_and_marks_constants(tmp_path, capsys):
    _jacobi_observations(tmp_path / "obs")
    out = tmp_path / "model.json"
    assert main(["fit", str(tmp_path / "obs"), "-o", str(out), "--penalty", "1e-8"]) == 0
    assert "1 constant" in capsys.readouterr().out
    model = formats.read_program(out)
    bb4 = model.blocks[3].count
    w = dict(zip(bb4.terms, bb4.weights))
    assert w[("n", "n")] == pytest.approx(1, abs=1e-4)
    assert w[("n",)] == pytest.approx(-3, abs=1e-4)
    assert bb4.intercept == pytest.approx(2, abs=1e-3)
    assert model.blocks[-1].count.constant
    again = tmp_path / "again.json"
    main(["fit", str(tmp_path / "obs"), "-o", str(again), "--penalty", "1e-8"])
    assert again.read_bytes() == out.read_bytes()


def test_fit_rejects_empty_directory(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["fit", str(tmp_path / "empty"), "-o", str(tmp_path / "m.json")]) == 2


def test_predict_trivial_model(tmp_path, capsys):
    m = ProgramModel((BasicBlockModel(0, Graphlet(((0, "br"),)), 100, time_s=1e-9),))
    formats.write_program(m, tmp_path / "m.json")
    rep = tmp_path / "r.json"
    assert main(["predict", str(tmp_path / "m.json"), "--report", str(rep), "--polynomial"]) == 0
    out = capsys.readouterr().out
    assert "T = 1e-07 s" in out and "T(inputs) = 1e-07" in out
    assert json.loads(rep.read_text())["total_runtime_s"] == pytest.approx(1e-7)


def test_predict_invalid_model_exit_3(tmp_path):
    m = ProgramModel((BasicBlockModel(0, Graphlet(((0, "br"),), ((0, 0),)), 1),))
    formats.write_program(m, tmp_path / "m.json")
    assert main(["predict", str(tmp_path / "m.json")]) == 3


@pytest.fixture(scope="module")
def saxpy_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("sx")
    for n in (200, 300, 400, 500):
        d = root / "obs" / f"n{n}"
        assert main(["synth", "saxpy", str(n), "-o", str(d)]) == 0
        assert main(["profile", str(d / "trace.txt"), str(d / "program.json"), "-o", str(d / "profiles.json")]) == 0
    assert main(["fit", str(root / "obs"), "-o", str(root / "model.json")]) == 0
    return root


def test_sweep_l1_ladder_gives_four_rows(saxpy_run, capsys):
    csv = saxpy_run / "l1.csv"
    rc = main(["sweep", str(saxpy_run / "model.json"), "--axis", "l1.size", "--values", "32K,64K,128K,256K",
               "--input", "n=4096", "--csv", str(csv), "--plot"])
    assert rc == 0
    rows = formats.read_sweep_csv(csv.read_text())
    assert len(rows) == 4
    assert [bool(r["error"]) for r in rows] == [False, False, False, True]
    assert csv.with_suffix(".png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "warning" in capsys.readouterr().err


def test_sweep_unknown_axis_lists_choices(saxpy_run, capsys):
    rc = main(["sweep", str(saxpy_run / "model.json"), "--axis", "l9.size", "--values", "1"])
    assert rc == 2
    assert "pipeline.all" in capsys.readouterr().err


def test_sweep_to_stdout(saxpy_run, capsys):
    rc = main(["sweep", str(saxpy_run / "model.json"), "--axis", "input.n", "--values", "1000,2000,3000"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and lines[0].startswith("axis_value")


def test_profile_plot(saxpy_run, tmp_path):
    d = saxpy_run / "obs" / "n200"
    out = tmp_path / "p.json"
    fig = tmp_path / "fig.png"
    assert main(["profile", str(d / "trace.txt"), str(d / "program.json"), "-o", str(out), f"--plot={fig}"]) == 0
    assert fig.stat().st_size > 1000


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert main([]) == 2

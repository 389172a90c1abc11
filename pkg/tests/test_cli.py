import json

import numpy as np
import pytest

import partdd.cli as cli
from partdd.engine_sync import EngineError
from partdd.io import load_problem, save_problem
from partdd.oracle import solve_centralized
from partdd.trace import read_trace, write_trace


@pytest.fixture
def inst2(tmp_path, qp2):
    path = tmp_path / "qp2.json"
    save_problem(qp2, path)
    return path


def test_generate_scenarios(tmp_path):
    for scen in ("qp", "num", "resalloc", "wls"):
        out = tmp_path / f"{scen}.json"
        assert cli.main(["generate", "--scenario", scen, "--n", "5", "--p", "0.6", "--seed", "1",
                         "-o", str(out), "--oracle"]) == 0
        prob = load_problem(out)
        assert prob.n == 5 and prob.scenario == scen
        assert (tmp_path / f"{scen}.oracle.json").exists()


def test_generate_path_graph_default(tmp_path):
    out = tmp_path / "p.json"
    assert cli.main(["generate", "--n", "2", "-o", str(out)]) == 0
    assert load_problem(out).graph.edges == ((0, 1),)


def test_sync_run_reaches_oracle_and_verifies(tmp_path, inst2, qp2_star):
    trace = tmp_path / "sync.csv"
    assert cli.main(["run", "--engine", "sync", "--inst", str(inst2), "--rounds", "3000", "-o", str(trace)]) == 0
    recs = read_trace(trace)
    assert abs(recs[-1].dual_cost - qp2_star.f) <= 1e-6
    manifest = json.loads((tmp_path / "sync.manifest.json").read_text())
    assert manifest["f_star"] == pytest.approx(qp2_star.f)
    assert len(manifest["instance_hash"]) == 64
    assert cli.main(["verify", "--inst", str(inst2), "--trace", str(trace),
                     "-o", str(tmp_path / "rep.json")]) == 0
    report = json.loads((tmp_path / "rep.json").read_text())
    assert report["passed"] and {c["check"] for c in report["checks"]} == {
        "weak_duality", "monotone_ascent", "disagreement_decay", "primal_error"}


def test_async_run_bit_reproducible(tmp_path, inst2):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert cli.main(["run", "--engine", "async", "--inst", str(inst2), "--events", "60",
                         "--seed", "3", "-o", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert read_trace(a)[5].t_over_n == 2.5


def test_equivalence_flag(tmp_path, qp6, capsys):
    inst = tmp_path / "qp6.json"
    save_problem(qp6, inst)
    out = tmp_path / "coord.csv"
    assert cli.main(["run", "--engine", "coord-ref", "--inst", str(inst), "--events", "100",
                     "--equivalence", "--no-oracle", "-o", str(out)]) == 0
    manifest = json.loads((tmp_path / "coord.manifest.json").read_text())
    assert manifest["equivalence_max_deviation"] <= 1e-10
    assert "max per-iteration deviation" in capsys.readouterr().out


def test_oversized_step_fails_monotonicity(tmp_path, inst2, qp2, capsys):
    # factor 10 n turns 1/(n L) into 10/L
    trace = tmp_path / "big.csv"
    assert cli.main(["run", "--inst", str(inst2), "--rounds", "50", "--factor", str(10 * qp2.n),
                     "-o", str(trace)]) == 0
    capsys.readouterr()
    assert cli.main(["verify", "--inst", str(inst2), "--trace", str(trace)]) == 4
    report = json.loads(capsys.readouterr().out)
    failed = {c["check"] for c in report["checks"] if not c["passed"]}
    assert "monotone_ascent" in failed


def test_empty_trace_is_input_error(tmp_path, inst2):
    trace = tmp_path / "empty.csv"
    write_trace(trace, [])
    assert cli.main(["verify", "--inst", str(inst2), "--trace", str(trace)]) == 2
    with pytest.raises(cli.ConfigError):
        cli.verify_trace([], 0.0)


def test_output_dir_env(tmp_path, inst2, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "out"))
    assert cli.main(["run", "--inst", str(inst2), "--rounds", "5", "-o", "t.csv"]) == 0
    assert (tmp_path / "out" / "t.csv").exists()
    assert (tmp_path / "out" / "t.manifest.json").exists()


def test_solver_failure_exit_code(tmp_path, inst2, monkeypatch):
    def boom(*a, **k):
        raise EngineError(1, 7, RuntimeError("stalled"))

    monkeypatch.setattr(cli, "run_sync", boom)
    assert cli.main(["run", "--inst", str(inst2), "--rounds", "5", "-o", str(tmp_path / "x.csv")]) == 3


def test_bad_input_exit_codes(tmp_path, inst2):
    assert cli.main(["run", "--inst", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", "--inst", str(inst2), "--factor", "-1"]) == 2
    assert cli.main(["generate", "--n", "4", "--p", "1.5"]) == 2
    assert cli.main(["frobnicate"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert cli.main(["verify", "--inst", str(inst2), "--trace", str(bad)]) == 2


def test_verify_detects_other_instance(tmp_path, inst2, qp6):
    trace = tmp_path / "t.csv"
    assert cli.main(["run", "--inst", str(inst2), "--rounds", "3", "-o", str(trace)]) == 0
    other = tmp_path / "other.json"
    save_problem(qp6, other)
    assert cli.main(["verify", "--inst", str(other), "--trace", str(trace)]) == 2


def test_verify_trace_weak_duality_report():
    from partdd.trace import TraceRecord

    recs = [TraceRecord(t, q, None, 0.0, 0, 0.0) for t, q in enumerate([0.0, 1.0, 2.5])]
    rep = cli.verify_trace(recs, f_star=2.0)
    weak = next(c for c in rep["checks"] if c["check"] == "weak_duality")
    assert not weak["passed"] and weak["margin"] == pytest.approx(1e-8 - 0.5)
    assert np.isclose(rep["final_cost_error"], 0.5)

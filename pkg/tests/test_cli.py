import json

import pytest

from ecsim.cli import main

SCENARIO = {
    "grid": {"width": 4, "height": 4},
    "nodes": 6,
    "initial_energy_j": 100.0,
    "round_s": 10.0,
    "horizon_s": 40.0,
    "p_move": 0.0,
    "flows": [{"src": 0, "dst": 3, "rate_pps": 0.5}],
}


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SCENARIO))
    return path


def test_run_writes_report(scenario_file, tmp_path):
    out = tmp_path / "out"
    code = main([
        "run", "--config", str(scenario_file), "--seed", "42",
        "--out", str(out), "--quiet",
    ])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["meta"]["seed"] == 42
    assert (out / "timeseries.csv").exists()
    assert not (out / "trace.csv").exists()


def test_run_with_trace(scenario_file, tmp_path):
    out = tmp_path / "out"
    code = main([
        "run", "--config", str(scenario_file), "--seed", "1",
        "--out", str(out), "--trace", "--quiet",
    ])
    assert code == 0
    assert (out / "trace.csv").read_text().startswith("time,node,kind,detail")


def test_run_is_reproducible(scenario_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main([
            "run", "--config", str(scenario_file), "--seed", "7",
            "--out", str(out), "--trace", "--quiet",
        ]) == 0
        outs.append(out)
    assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()
    assert (outs[0] / "trace.csv").read_bytes() == (outs[1] / "trace.csv").read_bytes()


def test_config_error_exit_code_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SCENARIO, "unknown_key": 1}))
    code = main(["run", "--config", str(bad), "--seed", "1",
                 "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 2


def test_missing_config_exit_code_2(tmp_path):
    code = main(["run", "--config", str(tmp_path / "nope.json"), "--seed", "1",
                 "--out", str(tmp_path / "o"), "--quiet"])
    assert code == 2


def test_compare_emits_table(scenario_file, tmp_path):
    out = tmp_path / "cmp"
    code = main([
        "compare", "--config", str(scenario_file), "--seed", "3",
        "--schemes", "traffic-aware,periodic,always-on",
        "--out", str(out), "--quiet",
    ])
    assert code == 0
    text = (out / "compare.csv").read_text()
    lines = text.strip().split("\n")
    assert lines[0] == "metric,scheme,value,delta_vs_baseline_pct"
    schemes = {line.split(",")[1] for line in lines[1:]}
    assert schemes == {"traffic-aware", "periodic", "always-on"}
    for scheme in schemes:
        assert (out / scheme / "report.json").exists()


def test_compare_needs_two_schemes(scenario_file, tmp_path):
    code = main([
        "compare", "--config", str(scenario_file), "--seed", "3",
        "--schemes", "traffic-aware", "--out", str(tmp_path / "cmp"), "--quiet",
    ])
    assert code == 2


def test_sweep_writes_one_report_per_value(scenario_file, tmp_path):
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--config", str(scenario_file), "--param", "nodes",
        "--values", "6,8,10", "--seed", "2", "--out", str(out), "--quiet",
    ])
    assert code == 0
    reports = sorted(out.glob("nodes=*/seed=2/report.json"))
    assert len(reports) == 3
    counts = sorted(
        json.loads(p.read_text())["meta"]["node_count"] for p in reports
    )
    assert counts == [6, 8, 10]


def test_sweep_multiple_seeds(scenario_file, tmp_path):
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--config", str(scenario_file), "--param", "p_move",
        "--values", "0.0,0.01", "--seeds", "1,2", "--out", str(out), "--quiet",
    ])
    assert code == 0
    assert len(list(out.glob("p_move=*/seed=*/report.json"))) == 4


def test_sweep_parallel_env(scenario_file, tmp_path, monkeypatch):
    monkeypatch.setenv("ECSIM_THREADS", "2")
    out = tmp_path / "sweep"
    code = main([
        "sweep", "--config", str(scenario_file), "--param", "nodes",
        "--values", "6,8", "--seeds", "1,2", "--out", str(out), "--quiet",
    ])
    assert code == 0
    assert len(list(out.glob("nodes=*/seed=*/report.json"))) == 4

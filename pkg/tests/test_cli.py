import json
import subprocess
import sys

import pytest

from patrolplan.cli import RunConfig, load_config, main, parse_config
from patrolplan.domain import ConfigError
from patrolplan.evaluation import read_report

SMALL = {
    "config_version": 1,
    "synthetic": {"n_days": 10, "call_rate": 6, "start": "2013-01-07"},
    "train": ["2013-01-07", "2013-01-13"],
    "test": ["2013-01-14", "2013-01-15"],
    "planners": ["imp-greedy", "lerk-cs"],
    "officer_counts": [2, 3],
    "runs": 2,
    "seed": 4,
    "optimizer": {"population_size": 4, "max_iterations": 1},
    "sim": {"stay_minutes": 10},
    "forest": {"n_trees": 5, "max_depth": 4},
}


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_parse_config_fills_sections():
    cfg = parse_config(SMALL)
    assert cfg.synthetic.n_days == 10 and cfg.optimizer.population_size == 4
    assert cfg.sim.optimizer is cfg.optimizer
    assert cfg.day_range(cfg.test) == [7, 8]
    assert RunConfig().validate().planners == parse_config({}).planners


@pytest.mark.parametrize("change", [
    {"config_version": 2},
    {"planners": ["ant-colony"]},
    {"officer_counts": [0]},
    {"runs": 0},
    {"surprise": 1},
    {"optimizer": {"population_size": 0}},
    {"sim": {"speed": -1}},
    {"forest": {"depth": 3}},
    {"test": ["2013-01-10", "2013-01-15"]},
    {"data": {"crimes": "nope.csv"}},
    {"slot_minutes": 60},
])
def test_bad_configs_are_rejected(change):
    with pytest.raises(ConfigError):
        parse_config({**SMALL, **change})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "list.json")


def test_generate_then_load_as_real_data(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    assert main(["generate", "--config", str(cfg), "--out", str(tmp_path / "data")]) == 0
    names = sorted(p.name for p in (tmp_path / "data").iterdir())
    assert names == ["calls.csv", "checkins.csv", "crimes.csv", "pois.csv"]
    # the same files fed back as real data give the same prediction
    real = {k: v for k, v in SMALL.items() if k != "synthetic"}
    real["data"] = {k: f"data/{k}.csv" for k in ("crimes", "checkins", "pois", "calls")}
    real["data"].update(bbox=[47.6000, -122.3300, 47.6054, -122.2922], start="2013-01-07", n_days=10)
    capsys.readouterr()
    assert main(["predict", "--config", str(_write(tmp_path, SMALL, "s.json")), "--out", str(tmp_path / "a")]) == 0
    a = capsys.readouterr().out
    assert main(["predict", "--config", str(_write(tmp_path, real, "r.json")), "--out", str(tmp_path / "b")]) == 0
    b = capsys.readouterr().out
    assert a == b and "accuracy" in json.loads(a)
    assert (tmp_path / "a" / "hotspots.csv").read_bytes() == (tmp_path / "b" / "hotspots.csv").read_bytes()


def test_skipped_rows_reported_on_stderr(tmp_path, capsys):
    main(["generate", "--config", str(_write(tmp_path, SMALL)), "--out", str(tmp_path / "data")])
    with (tmp_path / "data" / "crimes.csv").open("a") as fh:
        fh.write("garbage,row\n")
    real = {k: v for k, v in SMALL.items() if k != "synthetic"}
    real["data"] = {k: f"data/{k}.csv" for k in ("crimes", "checkins", "pois", "calls")}
    real["data"].update(bbox=[47.6000, -122.3300, 47.6054, -122.2922], start="2013-01-07", n_days=10)
    capsys.readouterr()
    assert main(["predict", "--config", str(_write(tmp_path, real, "r.json")), "--out", str(tmp_path / "o")]) == 0
    assert "skipped 1 malformed row(s)" in capsys.readouterr().err


def test_simulate_writes_one_run_per_cell(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(_write(tmp_path, SMALL)), "--out", str(out)]) == 0
    runs = sorted(p.relative_to(out).as_posix() for p in out.glob("runs/*/*/*/events.csv"))
    assert runs == [f"runs/{p}/n0{n}/run0/events.csv" for p in ("imp-greedy", "lerk-cs") for n in (2, 3)]
    reps = read_report(out / "report.csv")
    assert {r.period for r in reps} >= {"total", "week1", "2013-01"}
    assert all(r.runs <= 1 for r in reps)


def test_benchmark_is_reproducible_for_a_seed(tmp_path):
    cfg = str(_write(tmp_path, SMALL))
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
    assert main(["benchmark", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() != (tmp_path / "c" / "report.csv").read_bytes()
    reps = read_report(tmp_path / "a" / "report.csv")
    assert {r.runs for r in reps if r.metric == "robustness"} == {2}


@pytest.mark.parametrize("change, flags", [
    ({"planners": ["ant-colony"]}, []),
    ({"test": ["2013-01-15", "2013-01-14"]}, []),
    ({"test": ["2013-02-01", "2013-02-02"]}, []),
    ({}, ["--jobs", "0"]),
    ({}, ["--seed", "-1"]),
])
def test_bad_runs_exit_with_code_2(tmp_path, capsys, change, flags):
    cfg = _write(tmp_path, {**SMALL, **change})
    assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "o"), *flags]) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "patrolplan", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for word in ("generate", "predict", "simulate", "benchmark", "--config", "--seed", "--jobs", "--out"):
        assert word in r.stdout

"""Command line: ``python -m patrolplan {generate,predict,simulate,benchmark}``.

Configuration is a JSON document.  Every key is optional; omitted keys take
the defaults of :class:`RunConfig`.  Example::

    {
      "config_version": 1,
      "synthetic": {"n_days": 49, "crime_rate": 0.05, "call_rate": 30},
      "train": ["2013-01-14", "2013-01-27"],
      "test": ["2013-01-28", "2013-02-24"],
      "planners": ["glerk-ga", "imp-greedy"],
      "officer_counts": [5, 10],
      "runs": 5,
      "optimizer": {"population_size": 100, "max_iterations": 300},
      "sim": {"speed": 1.2, "stay_minutes": 10, "patrol_coldspots": true},
      "forest": {"n_trees": 100, "max_depth": 12},
      "vote_threshold": 0.5
    }

Real data replaces ``synthetic`` with ``"data": {"crimes": "...csv",
"checkins": "...", "pois": "...", "calls": "...", "bbox": [min_lat, min_lon,
max_lat, max_lon], "start": "YYYY-MM-DD", "n_days": N}``.  Relative paths are
resolved against the config file's directory.  Date ranges are inclusive.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .domain import DEFAULT_STAY_MIN, ConfigError, NodeState
from .evaluation import Cell, report, sub_seed, sweep, write_report
from .ingest import LoadError, Scenario, SyntheticParams, build_grid, generate_synthetic, load_scenario, write_scenario
from .optimize import PLANNERS, OptimizerParams, net_objective
from .predict import ForestParams, HotspotMap, fit_predict
from .sim import SimConfig

CONFIG_VERSION = 1
log = logging.getLogger("patrolplan")


@dataclass
class RunConfig:
    config_version: int = CONFIG_VERSION
    synthetic: SyntheticParams | None = field(default_factory=lambda: SyntheticParams(n_days=49))
    data: dict | None = None
    rows: int = 2
    cols: int = 47
    slot_minutes: int = 120
    train: tuple = ("2013-01-14", "2013-01-27")
    test: tuple = ("2013-01-28", "2013-02-24")
    planners: tuple = PLANNERS
    officer_counts: tuple = (5, 10, 15, 20, 25, 30)
    runs: int = 5
    seed: int = 0
    optimizer: OptimizerParams = OptimizerParams()
    sim: SimConfig = SimConfig()
    forest: ForestParams = ForestParams()
    predictor: str = "forest"
    vote_threshold: float = 0.5
    salary: float = 0.0
    hotspot_map: str | None = None
    base_dir: Path = Path(".")

    def validate(self):
        if self.config_version != CONFIG_VERSION:
            raise ConfigError(f"config_version {self.config_version} not supported (expected {CONFIG_VERSION})")
        if self.slot_minutes != 120:
            raise ConfigError("only 120-minute slots are supported")
        if (self.synthetic is None) == (self.data is None):
            raise ConfigError("give exactly one of 'synthetic' or 'data'")
        bad = [p for p in self.planners if p not in PLANNERS]
        if bad:
            raise ConfigError(f"unknown planner(s) {', '.join(bad)}; choose from {', '.join(PLANNERS)}")
        if not self.planners or not self.officer_counts:
            raise ConfigError("planners and officer_counts must be non-empty")
        if any(int(n) < 1 for n in self.officer_counts):
            raise ConfigError("officer counts must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.salary < 0:
            raise ConfigError("salary must be >= 0")
        if self.predictor not in ("forest", "density"):
            raise ConfigError("predictor must be 'forest' or 'density'")
        tr, te = self.day_range(self.train), self.day_range(self.test)
        if tr and te and not (tr[-1] < te[0] or te[-1] < tr[0]):
            raise ConfigError("train and test ranges overlap")
        if self.data is not None:
            for k in ("crimes", "checkins", "pois", "calls"):
                if k not in self.data:
                    raise ConfigError(f"data.{k} missing")
                if not self.resolve(self.data[k]).exists():
                    raise ConfigError(f"data.{k}: {self.resolve(self.data[k])} does not exist")
        if self.hotspot_map is not None and not self.resolve(self.hotspot_map).exists():
            raise ConfigError(f"hotspot_map {self.hotspot_map} does not exist")
        return self

    @property
    def start(self) -> date:
        return self.synthetic.start if self.synthetic is not None else date.fromisoformat(self.data["start"])

    def day_range(self, span) -> list[int]:
        lo, hi = (date.fromisoformat(str(s)) for s in span)
        return list(range((lo - self.start).days, (hi - self.start).days + 1))

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


def _build(cls, d: dict, name: str):
    known = {f.name for f in dataclasses.fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(sorted(extra))}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from e


def _sim_config(d: dict, optimizer: OptimizerParams) -> SimConfig:
    d = dict(d)
    stay = d.pop("stay_minutes", DEFAULT_STAY_MIN)
    if isinstance(stay, dict):
        try:
            stay = {NodeState[k.upper()]: float(v) for k, v in stay.items()}
        except KeyError as e:
            raise ConfigError(f"sim.stay_minutes: unknown node state {e}") from e
        stay = {s: stay.get(s, DEFAULT_STAY_MIN) for s in NodeState}
    else:
        stay = {s: float(stay) for s in NodeState}
    return _build(SimConfig, {**d, "stay_minutes": stay, "optimizer": optimizer}, "sim")


def parse_config(doc: dict, base_dir=".") -> RunConfig:
    doc = dict(doc)
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"base_dir"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(extra))}")
    kw = {"base_dir": Path(base_dir)}
    if "data" in doc:
        kw["synthetic"] = None
    if doc.get("synthetic") is not None:
        syn = dict(doc.pop("synthetic"))
        if "start" in syn:
            syn["start"] = date.fromisoformat(syn["start"])
        for k in ("bbox", "call_hours"):
            if k in syn:
                syn[k] = tuple(syn[k])
        kw["synthetic"] = _build(SyntheticParams, syn, "synthetic")
    opt = _build(OptimizerParams, doc.pop("optimizer", {}), "optimizer")
    kw["optimizer"] = opt
    kw["sim"] = _sim_config(doc.pop("sim", {}), opt)
    kw["forest"] = _build(ForestParams, doc.pop("forest", {}), "forest")
    for k in ("planners", "officer_counts", "train", "test"):
        if k in doc:
            doc[k] = tuple(doc[k])
    kw.update(doc)
    try:
        cfg = RunConfig(**kw)
        return cfg.validate()
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(doc, path.parent)


# ---------------------------------------------------------------- pipeline pieces

def load_inputs(cfg: RunConfig, seed: int) -> Scenario:
    if cfg.synthetic is not None:
        return generate_synthetic(cfg.synthetic, seed)
    d = cfg.data
    grid = build_grid(tuple(d["bbox"]), cfg.rows, cfg.cols)
    paths = {k: cfg.resolve(d[k]) for k in ("crimes", "checkins", "pois", "calls")}
    scenario, skipped = load_scenario(paths, grid, cfg.start, int(d["n_days"]))
    for k, v in skipped.items():
        if v:
            print(f"skipped {v} malformed row(s) in {paths[k]}", file=sys.stderr)
    for k, v in scenario.dropped.items():
        if v:
            print(f"skipped {v} {k} record(s) outside the grid or date range", file=sys.stderr)
    return scenario


def _test_days(cfg: RunConfig, scenario: Scenario) -> list[int]:
    days = cfg.day_range(cfg.test)
    if not days:
        raise ConfigError("test period is empty")
    if days[0] < 0 or days[-1] >= scenario.n_days:
        raise ConfigError("test period lies outside the scenario dates")
    return days


def hotspots_for(cfg: RunConfig, scenario: Scenario, seed: int, out: Path | None = None):
    if cfg.hotspot_map is not None:
        return HotspotMap.from_csv(cfg.resolve(cfg.hotspot_map)), None
    train = [d for d in cfg.day_range(cfg.train) if 0 <= d < scenario.n_days]
    pred = fit_predict(scenario, train, _test_days(cfg, scenario), cfg.forest, seed,
                       cfg.vote_threshold, cfg.predictor)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        pred.hotspots.to_csv(out / "hotspots.csv")
        if hasattr(pred.model, "save"):
            pred.model.save(out / "model.json")
        (out / "prediction_metrics.json").write_text(json.dumps(pred.metrics, indent=2, sort_keys=True))
    return pred.hotspots, pred.metrics


# ---------------------------------------------------------------- commands

def cmd_generate(cfg: RunConfig, seed: int, out: Path, jobs: int) -> int:
    if cfg.synthetic is None:
        raise ConfigError("generate needs a 'synthetic' section")
    paths = write_scenario(generate_synthetic(cfg.synthetic, seed), out)
    for p in paths.values():
        print(p)
    return 0


def cmd_predict(cfg: RunConfig, seed: int, out: Path, jobs: int) -> int:
    scenario = load_inputs(cfg, seed)
    _, metrics = hotspots_for(cfg, scenario, seed, out)
    if metrics is not None:
        print(json.dumps({k: round(v, 4) if isinstance(v, float) else v for k, v in metrics.items()}, sort_keys=True))
    return 0


def _run_sweep(cfg: RunConfig, seed: int, out: Path, jobs: int, runs: int) -> int:
    scenario = load_inputs(cfg, seed)
    hotspots, _ = hotspots_for(cfg, scenario, seed, out)
    days = _test_days(cfg, scenario)
    t0 = time.time()
    total = len(cfg.planners) * len(cfg.officer_counts) * runs

    def progress(c: Cell):
        log.info("%s n=%d run=%d done (%.0fs)", c.planner, c.n_officers, c.run, time.time() - t0)

    logs = sweep(scenario, hotspots, cfg.planners, cfg.officer_counts, runs, seed, cfg.sim, days,
                 jobs=jobs, out_dir=out, progress=progress)
    rows = report(logs, scenario, days[0], len(days), cfg.sim)
    write_report(out / "report.csv", rows)
    print(f"{total} simulations, report at {out / 'report.csv'}")
    for r in rows:
        if r.period == "total" and r.metric == "robustness":
            net = net_objective(r.mean, r.n_officers, cfg.salary)
            print(f"{r.planner:>10} n={r.n_officers:<3} robustness {r.mean:8.2f} +- {r.std:6.2f}  net {net:8.2f}")
    return 0


def cmd_simulate(cfg: RunConfig, seed: int, out: Path, jobs: int) -> int:
    return _run_sweep(cfg, seed, out, jobs, runs=1)


def cmd_benchmark(cfg: RunConfig, seed: int, out: Path, jobs: int) -> int:
    return _run_sweep(cfg, seed, out, jobs, runs=cfg.runs)


COMMANDS = {"generate": cmd_generate, "predict": cmd_predict, "simulate": cmd_simulate,
            "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="patrolplan", description="Crime-aware multi-officer patrol planning.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON run configuration (defaults used when omitted)")
    ap.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    ap.add_argument("--jobs", type=int, default=1, help="parallel simulations")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, cfg.seed, out, args.jobs)
    except (ConfigError, LoadError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        # empty periods, unbalanceable training data and similar input problems
        print(f"error: {e}", file=sys.stderr)
        return 2


__all__ = ["RunConfig", "load_config", "parse_config", "main", "sub_seed"]

"""Efficiency / robustness metrics and their aggregation over runs and periods."""

from __future__ import annotations

import csv
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import sim
from .domain import arrival_multiplier
from .sim import EventLog, SimConfig

CRIME_WINDOW_MIN = 60.0
REPORT_COLUMNS = ("planner", "n_officers", "period", "metric", "mean", "std", "runs")


def crime_events(scenario, records=None) -> np.ndarray:
    """``[(node, minute), ...]`` for crime records of a scenario."""
    records = scenario.crimes if records is None else records
    if not records:
        return np.zeros((0, 2))
    return np.column_stack([scenario.node_of(records), scenario.minutes_of(records)])


def duty_crimes(crimes: np.ndarray, shift_start: int, shift_end: int) -> np.ndarray:
    """Crimes whose occurrence falls inside the daily duty window."""
    tod = crimes[:, 1] % 1440
    return crimes[(tod >= shift_start) & (tod < shift_end)]


def efficiency(log: EventLog, crimes) -> float | None:
    """Share of crimes whose node had a visit overlapping [t-60, t+60]; None without crimes."""
    crimes = np.asarray(crimes, dtype=float).reshape(-1, 2)
    if len(crimes) == 0:
        return None
    by_node = defaultdict(list)
    for _, node, start, end in log.visits():
        by_node[node].append((start, end))
    hit = 0
    for node, t in crimes:
        iv = by_node.get(int(node))
        if not iv:
            continue
        iv = np.asarray(iv)
        if np.any((iv[:, 0] <= t + CRIME_WINDOW_MIN) & (iv[:, 1] >= t - CRIME_WINDOW_MIN)):
            hit += 1
    return hit / len(crimes)


def robustness(log: EventLog, period: tuple | None = None) -> float:
    """Sum of arrival-time credits over attended calls (optionally only calls attended in ``period``)."""
    total = 0.0
    for e in log.of_kind("call_attended"):
        if period is not None and not (period[0] <= e.time < period[1]):
            continue
        total += arrival_multiplier(e.delay_min, e.priority)
    return total


@dataclass(frozen=True)
class MetricReport:
    planner: str
    n_officers: int
    period: str
    metric: str
    mean: float
    std: float
    runs: int

    def row(self):
        return [self.planner, self.n_officers, self.period, self.metric, repr(self.mean), repr(self.std), self.runs]


def mean_std(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if len(v) == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def periods(epoch: datetime, first_day: int, n_days: int, grouping: str) -> list[tuple[str, float, float]]:
    """``(label, start_minute, end_minute)`` blocks covering the evaluated days."""
    out = []
    if grouping == "weekly":
        for w, d in enumerate(range(first_day, first_day + n_days, 7)):
            e = min(d + 7, first_day + n_days)
            out.append((f"week{w + 1}", d * 1440.0, e * 1440.0))
    elif grouping == "monthly":
        d = first_day
        while d < first_day + n_days:
            day = epoch + timedelta(days=d)
            nxt = (day.replace(day=1) + timedelta(days=32)).replace(day=1)
            e = min((nxt - epoch).days, first_day + n_days)
            out.append((day.strftime("%Y-%m"), d * 1440.0, e * 1440.0))
            d = e
    else:
        raise ValueError(f"unknown grouping {grouping!r}")
    return out


def period_metrics(log: EventLog, crimes: np.ndarray, blocks) -> dict:
    """``{(period, metric): value}`` for one run."""
    out = {}
    for label, lo, hi in blocks:
        c = crimes[(crimes[:, 1] >= lo) & (crimes[:, 1] < hi)] if len(crimes) else crimes
        out[(label, "robustness")] = robustness(log, (lo, hi))
        out[(label, "efficiency")] = efficiency(log, c)
    return out


def aggregate(runs: dict) -> list[MetricReport]:
    """Mean / sample std across runs.

    ``runs`` maps ``(planner, n_officers)`` to a list with one ``period_metrics``
    dict per run.
    """
    reports = []
    for (planner, n_off), per_run in sorted(runs.items()):
        keys = sorted({k for r in per_run for k in r}, key=lambda k: (k[0], k[1]))
        for period, metric in keys:
            vals = [r.get((period, metric)) for r in per_run]
            mean, std = mean_std(vals)
            reports.append(MetricReport(planner, n_off, period, metric, mean, std,
                                        sum(v is not None for v in vals)))
    return reports


def write_report(path, reports) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())
    tmp.replace(path)


def read_report(path) -> list[MetricReport]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [MetricReport(r["planner"], int(r["n_officers"]), r["period"], r["metric"],
                             float(r["mean"]), float(r["std"]), int(r["runs"])) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------- sweeps

DETERMINISTIC_PLANNERS = ("imp-greedy", "dis-greedy")


def sub_seed(seed: int, planner: str, n_officers: int, run: int) -> int:
    """Seed of one sweep cell, derived from the top-level seed and the cell's coordinates."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(planner.encode()), int(n_officers), int(run)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Cell:
    planner: str
    n_officers: int
    run: int
    seed: int

    def path(self, out_dir) -> Path:
        return Path(out_dir) / "runs" / self.planner / f"n{self.n_officers:02d}" / f"run{self.run}" / "events.csv"


def sweep_cells(planners, counts, runs: int, seed: int) -> list[Cell]:
    return [Cell(p, n, r, sub_seed(seed, p, n, r)) for p in planners for n in counts for r in range(runs)]


def simulate_cell(scenario, hotspots, cell: Cell, config: SimConfig, days) -> EventLog:
    return sim.run(scenario, hotspots, cell.planner, cell.n_officers, cell.seed, config, days)


def _cell_job(args):
    scenario, hotspots, cell, config, days, out_dir = args
    log = simulate_cell(scenario, hotspots, cell, config, days)
    if out_dir is not None:
        p = cell.path(out_dir)
        p.parent.mkdir(parents=True, exist_ok=True)
        log.to_csv(p)
    return log


def sweep(scenario, hotspots, planners, counts, runs: int, seed: int, config: SimConfig, days,
          jobs: int = 1, out_dir=None, progress=None) -> dict:
    """Simulate every (planner, count, run) cell; returns ``{cell: EventLog}``.

    Planners that never draw random numbers produce the same log for every
    run, so their first run is simulated once and reused for the others.
    """
    cells = sweep_cells(planners, counts, runs, seed)
    todo = [c for c in cells if c.planner not in DETERMINISTIC_PLANNERS or c.run == 0]
    args = [(scenario, hotspots, c, config, list(days), out_dir) for c in todo]
    logs = {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for c, log in zip(todo, ex.map(_cell_job, args)):
                logs[c] = log
                if progress:
                    progress(c)
    else:
        for c, a in zip(todo, args):
            logs[c] = _cell_job(a)
            if progress:
                progress(c)
    for c in cells:
        if c not in logs:
            first = next(d for d in todo if (d.planner, d.n_officers) == (c.planner, c.n_officers))
            logs[c] = logs[first]
            if out_dir is not None:
                p = c.path(out_dir)
                p.parent.mkdir(parents=True, exist_ok=True)
                logs[c].to_csv(p)
    return {c: logs[c] for c in cells}


def sweep_metrics(logs: dict, crimes: np.ndarray, blocks) -> dict:
    """``{(planner, n_officers): [period_metrics per run]}`` in run order."""
    out = defaultdict(list)
    for c in sorted(logs, key=lambda c: (c.planner, c.n_officers, c.run)):
        out[(c.planner, c.n_officers)].append(period_metrics(logs[c], crimes, blocks))
    return dict(out)


def report(logs: dict, scenario, first_day: int, n_days: int, config: SimConfig) -> list[MetricReport]:
    """Weekly, monthly and whole-period rows for every (planner, count)."""
    crimes = crime_events(scenario)
    if len(crimes):
        crimes = duty_crimes(crimes, config.shift_start, config.shift_end)
    rows = []
    whole = [("total", first_day * 1440.0, (first_day + n_days) * 1440.0)]
    for grouping, blocks in (("week", periods(scenario.epoch, first_day, n_days, "weekly")),
                             ("month", periods(scenario.epoch, first_day, n_days, "monthly")),
                             ("all", whole)):
        rows += aggregate(sweep_metrics(logs, crimes, blocks))
    return rows

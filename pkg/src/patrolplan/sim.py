"""Minute-resolution multi-officer patrol simulation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from .domain import (
    DEFAULT_SPEED_MPS, DEFAULT_STAY_MIN, SLOT_MINUTES, ConfigError, NodeState, OfficerStatus,
    benefit_value, can_transition, haversine_m, priority_of,
)
from .encoding import PlanningProblem
from .features import importance
from .ingest import Scenario
from .optimize import PLANNERS, OptimizerParams, plan
from .predict import HotspotMap

EVENT_COLUMNS = ("time", "officer_id", "event", "node_id", "priority", "delay_min")
EVENT_KINDS = ("dispatch", "arrival", "visit_start", "visit_end", "call_attended", "call_unattended", "shift_end")


@dataclass(frozen=True)
class SimConfig:
    speed: float = DEFAULT_SPEED_MPS
    stay_minutes: dict = field(default_factory=lambda: {s: DEFAULT_STAY_MIN for s in NodeState})
    shift_start: int = 8 * 60
    shift_end: int = 20 * 60
    start_cell: int = 0
    patrol_coldspots: bool = True
    patrol_rounds: bool = True          # start a new round once every patrol target has been served
    optimizer: OptimizerParams = OptimizerParams()

    def __post_init__(self):
        if not self.speed > 0:
            raise ConfigError("speed must be positive")
        if not 0 <= self.shift_start < self.shift_end <= 1440:
            raise ConfigError("shift must lie within one day")
        if any(v < 0 for v in self.stay_minutes.values()):
            raise ConfigError("stay times must be non-negative")


@dataclass(frozen=True)
class Event:
    time: float          # minutes since scenario epoch
    officer_id: int      # -1 for call records nobody attended
    event: str
    node_id: int
    priority: int = 0
    delay_min: float = float("nan")
    call_id: int = -1


@dataclass
class EventLog:
    events: list = field(default_factory=list)
    epoch: object = None

    def add(self, *args, **kw):
        self.events.append(Event(*args, **kw))

    def of_kind(self, kind: str) -> list:
        return [e for e in self.events if e.event == kind]

    def visits(self):
        """(officer, node, start, end) for every completed visit."""
        open_, out = {}, []
        for e in self.events:
            if e.event == "visit_start":
                open_[e.officer_id] = e
            elif e.event == "visit_end":
                s = open_.pop(e.officer_id)
                out.append((e.officer_id, e.node_id, s.time, e.time))
        return out

    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with tmp.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(EVENT_COLUMNS)
            for e in self.events:
                t = (self.epoch + timedelta(minutes=e.time)).isoformat(timespec="seconds") if self.epoch else repr(e.time)
                delay = "" if math.isnan(e.delay_min) else repr(float(e.delay_min))
                w.writerow([t, e.officer_id, e.event, e.node_id, e.priority or "", delay])
        tmp.replace(path)

    @classmethod
    def from_csv(cls, path, epoch) -> "EventLog":
        from datetime import datetime
        log = cls(epoch=epoch)
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                t = (datetime.fromisoformat(r["time"]) - epoch).total_seconds() / 60.0
                log.add(t, int(r["officer_id"]), r["event"], int(r["node_id"]),
                        int(r["priority"]) if r["priority"] else 0,
                        float(r["delay_min"]) if r["delay_min"] else float("nan"))
        return log


@dataclass
class OfficerState:
    id: int
    cell: int
    status: OfficerStatus = OfficerStatus.IDLE
    target: int = -1
    remaining_m: float = 0.0
    visit_end: float = 0.0
    dispatch_time: float = 0.0
    dispatch_cell: int = -1

    def move_to(self, status: OfficerStatus):
        if not can_transition(self.status, status):
            raise RuntimeError(f"officer {self.id}: illegal transition {self.status} -> {status}")
        self.status = status


@dataclass
class PendingCall:
    id: int
    node: int
    time: float
    priority: int


@dataclass
class WorldState:
    clock: float
    day: int
    officers: list
    pending: dict                      # node -> list[PendingCall]
    locked: set = field(default_factory=set)
    served: set = field(default_factory=set)
    slot: int = -1
    dirty: bool = True

    def unassigned(self, states: np.ndarray, patrol_coldspots: bool) -> np.ndarray:
        """Nodes open for planning: live emergencies plus unserved patrol targets, minus locked ones."""
        ok = states == NodeState.EMERGENCY
        if patrol_coldspots:
            patrol = np.ones(len(states), dtype=bool)
        else:
            patrol = states != NodeState.COLDSPOT
        if self.served:
            patrol[list(self.served)] = False
        ok |= patrol
        if self.locked:
            ok[list(self.locked)] = False
        return np.flatnonzero(ok)


class Simulation:
    """One simulated world; :meth:`step` advances it by one minute."""

    def __init__(self, scenario: Scenario, hotspots: HotspotMap, planner: str, n_officers: int,
                 seed: int, config: SimConfig = SimConfig(), days=None):
        if planner not in PLANNERS:
            raise ValueError(f"unknown planner {planner!r}")
        if n_officers < 1:
            raise ValueError("need at least one officer")
        self.scenario = scenario
        self.hotspots = hotspots
        self.planner = planner
        self.n_officers = n_officers
        self.config = config
        self.days = list(range(scenario.n_days)) if days is None else list(days)
        if not self.days:
            raise ValueError("empty simulation period")
        self.rng = np.random.default_rng(seed)
        grid = scenario.grid
        c = grid.centroids()
        self.dist_m = haversine_m(c[:, None, 0], c[:, None, 1], c[None, :, 0], c[None, :, 1])
        self.travel = self.dist_m / config.speed / 60.0
        self.n_cells = grid.n_cells
        self.counts = scenario.crime_counts()
        self.log = EventLog(epoch=scenario.epoch)
        self.step_m = config.speed * 60.0
        self.calls = self._call_table()
        self.stay_by_state = np.array([float(config.stay_minutes.get(st, DEFAULT_STAY_MIN)) for st in NodeState])
        self.state = None
        self._base = np.zeros(self.n_cells, dtype=int)

    def _call_table(self):
        sc = self.scenario
        nodes = sc.node_of(sc.calls)
        times = sc.minutes_of(sc.calls)
        by_day = {}
        for i, (rec, k, t) in enumerate(zip(sc.calls, nodes, times)):
            by_day.setdefault(int(t // 1440), []).append(PendingCall(i, int(k), float(t), priority_of(rec.call_type)))
        return by_day

    # ------------------------------------------------------------ state helpers

    def node_state(self, k: int) -> NodeState:
        if self.state.pending.get(k):
            return NodeState.EMERGENCY
        return NodeState(self._base[k])

    def node_states(self) -> np.ndarray:
        """Current state of every node (predicted map overridden by live calls)."""
        out = self._base.copy()
        for k, calls in self.state.pending.items():
            if calls:
                out[k] = NodeState.EMERGENCY
        return out

    def _stay(self, state: NodeState) -> float:
        return float(self.stay_by_state[state])

    def start_day(self, day: int):
        cfg = self.config
        self.state = WorldState(
            clock=day * 1440 + cfg.shift_start, day=day,
            officers=[OfficerState(i, cfg.start_cell) for i in range(self.n_officers)],
            pending={},
        )
        self._day_calls = list(self.calls.get(day, []))
        self._call_cursor = 0
        self._sync_slot()

    def _sync_slot(self):
        s = self.state
        slot = int((s.clock % 1440) // SLOT_MINUTES)
        if slot != s.slot:
            s.slot = slot
            s.served = set()
            s.dirty = True
            self._importance = importance(self.counts, s.day, slot)
            self._base = np.where(self.hotspots.hot_nodes(s.day, slot), int(NodeState.HOTSPOT),
                                  int(NodeState.COLDSPOT))

    # ------------------------------------------------------------ one tick

    def step(self):
        """Advance one minute: inject calls, move, finish visits, plan."""
        s = self.state
        s.clock += 1
        self._sync_slot()
        self._inject_calls()
        for o in s.officers:
            if o.status is OfficerStatus.TRAVELLING:
                o.remaining_m -= self.step_m
                if o.remaining_m <= 1e-9:
                    self._arrive(o)
        self._finish_visits()
        self._plan()
        return s

    def _inject_calls(self):
        s = self.state
        while self._call_cursor < len(self._day_calls) and self._day_calls[self._call_cursor].time <= s.clock:
            c = self._day_calls[self._call_cursor]
            self._call_cursor += 1
            s.pending.setdefault(c.node, []).append(c)
            s.dirty = True

    def _arrive(self, o: OfficerState):
        s = self.state
        o.move_to(OfficerStatus.VISITING)
        o.cell, o.remaining_m = o.target, 0.0
        stay = self._stay(self.node_state(o.cell))
        self.log.add(s.clock, o.id, "arrival", o.cell)
        for c in s.pending.pop(o.cell, []):
            self.log.add(s.clock, o.id, "call_attended", o.cell, c.priority, s.clock - c.time, c.id)
        s.served.add(o.cell)
        o.visit_end = s.clock + stay
        self.log.add(s.clock, o.id, "visit_start", o.cell)
        if stay <= 0:
            self._end_visit(o)

    def _end_visit(self, o: OfficerState):
        s = self.state
        o.move_to(OfficerStatus.IDLE)
        s.locked.discard(o.cell)
        self.log.add(s.clock, o.id, "visit_end", o.cell)
        s.dirty = True

    def _finish_visits(self):
        for o in self.state.officers:
            if o.status is OfficerStatus.VISITING and o.visit_end <= self.state.clock:
                self._end_visit(o)

    def _plan(self):
        s = self.state
        cfg = self.config
        if not s.dirty or s.clock >= s.day * 1440 + cfg.shift_end:
            return
        s.dirty = False
        idle = [o for o in s.officers if o.status is OfficerStatus.IDLE]
        if not idle:
            return
        states = self.node_states()
        nodes = s.unassigned(states, cfg.patrol_coldspots)
        if cfg.patrol_rounds and s.served and not self._patrol_left(states, nodes):
            s.served = set()
            nodes = s.unassigned(states, cfg.patrol_coldspots)
        if len(nodes) == 0:
            return
        problem = self._problem(idle, nodes, states[nodes])
        routes = plan(self.planner, problem, cfg.optimizer, self.rng, committed_only=True)
        by_id = {o.id: o for o in idle}
        for oid in sorted(routes.routes):
            r = routes.routes[oid]
            if r:
                self._dispatch(by_id[oid], r[0].node)

    def _patrol_left(self, states, nodes) -> bool:
        if self.config.patrol_coldspots:
            return len(nodes) > 0 and not all(states[j] == NodeState.EMERGENCY for j in nodes)
        return bool(np.any(states[nodes] == NodeState.HOTSPOT))

    def _problem(self, idle, nodes, states) -> PlanningProblem:
        s = self.state
        prio = np.ones(len(nodes), dtype=int)
        call_t = np.full(len(nodes), np.nan)
        for k, calls in s.pending.items():
            i = np.searchsorted(nodes, k)
            if calls and i < len(nodes) and nodes[i] == k:
                top = max(c.priority for c in calls)
                prio[i] = top
                call_t[i] = min(c.time for c in calls if c.priority == top)
        w = self._importance[nodes]
        lam = np.array([0.0, 2.0, 4.0])[states]
        return PlanningProblem(
            travel=self.travel,
            officer_cell=[o.cell for o in idle],
            officer_ready=s.clock,
            node_cell=nodes,
            node_state=states,
            node_benefit=benefit_value(w, prio, lam),
            shift_end=s.day * 1440 + self.config.shift_end,
            node_priority=prio,
            node_call_time=call_t,
            node_stay=self.stay_by_state[states],
            officer_ids=[o.id for o in idle],
        )

    def _dispatch(self, o: OfficerState, node: int):
        s = self.state
        dist = float(self.dist_m[o.cell, node])
        ticks = max(0, math.ceil(dist / self.step_m - 1e-9))
        finish = s.clock + ticks + self._stay(self.node_state(node))
        if finish > s.day * 1440 + self.config.shift_end:
            o.move_to(OfficerStatus.OFF_DUTY)
            self.log.add(s.clock, o.id, "shift_end", o.cell)
            return
        o.move_to(OfficerStatus.TRAVELLING)
        o.target, o.remaining_m = node, dist
        o.dispatch_time, o.dispatch_cell = s.clock, o.cell
        s.locked.add(node)
        self.log.add(s.clock, o.id, "dispatch", node)
        if dist <= 1e-9:
            self._arrive(o)

    def end_day(self):
        s = self.state
        for o in s.officers:
            if o.status is not OfficerStatus.OFF_DUTY:
                o.move_to(OfficerStatus.OFF_DUTY)
                self.log.add(s.clock, o.id, "shift_end", o.cell)
        leftover = [c for calls in s.pending.values() for c in calls] + self._day_calls[self._call_cursor:]
        for c in sorted(leftover, key=lambda c: c.id):
            self.log.add(s.clock, -1, "call_unattended", c.node, c.priority, float("nan"), c.id)

    def run_day(self, day: int):
        self.start_day(day)
        self._inject_calls()
        self._plan()
        end = day * 1440 + self.config.shift_end
        while self.state.clock < end:
            self.step()
        self.end_day()

    def run(self) -> EventLog:
        for d in self.days:
            self.run_day(d)
        return self.log


def run(scenario: Scenario, hotspots: HotspotMap, planner: str, n_officers: int, seed: int,
        config: SimConfig = SimConfig(), days=None) -> EventLog:
    """Simulate ``days`` (default: the whole scenario) and return the event log."""
    return Simulation(scenario, hotspots, planner, n_officers, seed, config, days).run()

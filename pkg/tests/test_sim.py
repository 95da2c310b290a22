import filecmp
import math
from collections import defaultdict
from datetime import date, datetime

import numpy as np
import pytest

from patrolplan.domain import EARTH_RADIUS_M, NodeState, OfficerStatus
from patrolplan.ingest import CallRecord, Scenario, SyntheticParams, build_grid, generate_synthetic
from patrolplan.optimize import PLANNERS, OptimizerParams
from patrolplan.predict import HotspotMap
from patrolplan.sim import EVENT_COLUMNS, EventLog, SimConfig, Simulation, WorldState, run

# three cells on the equator whose centroids are 72 m apart (one minute at 1.2 m/s)
DLON = math.degrees(72.0 / EARTH_RADIUS_M)
LINE = build_grid((-0.0001, 0.0, 0.0001, 3 * DLON), 1, 3)
QUIET = SimConfig(patrol_coldspots=False)
FAST = OptimizerParams(population_size=6, max_iterations=2)


def _call(h, m, cell, call_type):
    c = LINE.cells[cell].centroid
    return CallRecord(datetime(2013, 1, 1, h, m), c.lat, c.lon, call_type)


def _line_scenario(calls=()):
    return Scenario(LINE, date(2013, 1, 1), 1, calls=list(calls))


def _no_hotspots(n_days=1, n=3):
    return HotspotMap(np.zeros((n_days, 12, n), dtype=bool))


def test_quiet_day_only_logs_shift_end():
    log = run(_line_scenario(), _no_hotspots(), "imp-greedy", 1, 0, QUIET)
    assert [(e.event, e.time) for e in log.events] == [("shift_end", 1200.0)]


@pytest.mark.parametrize("planner", PLANNERS)
def test_single_adjacent_call(planner):
    cfg = SimConfig(patrol_coldspots=False, optimizer=FAST)
    log = run(_line_scenario([_call(8, 30, 1, "Homicide")]), _no_hotspots(), planner, 1, 0, cfg)
    att = log.of_kind("call_attended")
    assert len(att) == 1
    # dispatched at 8:30, 72 m at 1.2 m/s is one minute, no queue
    assert att[0].delay_min == 1.0 and att[0].priority == 5 and att[0].node_id == 1
    kinds = [e.event for e in log.events]
    assert kinds == ["dispatch", "arrival", "call_attended", "visit_start", "visit_end", "shift_end"]


def test_queued_call_waits_for_visit_to_end():
    calls = [_call(8, 30, 1, "Homicide"), _call(8, 32, 2, "Robbery")]
    log = run(_line_scenario(calls), _no_hotspots(), "imp-greedy", 1, 0, QUIET)
    att = log.of_kind("call_attended")
    # first: 1 min travel; second: made at 8:32, officer free at 8:41 (10 min stay), arrives 8:42
    assert [(a.node_id, a.delay_min) for a in att] == [(1, 1.0), (2, 10.0)]


def test_unattended_calls_are_logged():
    calls = [_call(19, 59, 2, "Theft")]
    log = run(_line_scenario(calls), _no_hotspots(), "imp-greedy", 1, 0, QUIET)
    assert [e.event for e in log.events][-1] == "call_unattended"
    assert log.of_kind("call_attended") == []


def test_step_moves_one_minute_of_walking():
    sim = Simulation(_line_scenario(), _no_hotspots(), "imp-greedy", 1, 0, QUIET)
    sim.start_day(0)
    o = sim.state.officers[0]
    sim._dispatch(o, 1)
    assert o.status is OfficerStatus.TRAVELLING and o.remaining_m == pytest.approx(72.0)
    clock = sim.state.clock
    sim.step()
    assert sim.state.clock == clock + 1 and o.status is OfficerStatus.VISITING and o.cell == 1
    for _ in range(5):
        sim.step()
    assert o.status is OfficerStatus.VISITING
    n_events = len(sim.log.events)
    sim.step()
    assert len(sim.log.events) == n_events
    for _ in range(4):
        sim.step()
    assert o.status is OfficerStatus.IDLE


def test_idle_world_only_advances_clock():
    sim = Simulation(_line_scenario(), _no_hotspots(), "imp-greedy", 2, 0, QUIET)
    sim.start_day(0)
    sim.step()
    assert sim.state.clock == 481 and sim.log.events == []


def test_dispatch_past_shift_end_is_refused():
    sim = Simulation(_line_scenario(), _no_hotspots(), "imp-greedy", 1, 0, QUIET)
    sim.start_day(0)
    sim.state.clock = 1195
    o = sim.state.officers[0]
    sim._dispatch(o, 2)     # 2 min walk + 10 min stay ends after 20:00
    assert o.status is OfficerStatus.OFF_DUTY
    assert sim.log.events[-1].event == "shift_end"


def test_world_state_unassigned():
    ws = WorldState(clock=0, day=0, officers=[], pending={}, locked={1}, served={2})
    states = np.array([0, 1, 1, 2, 0])
    assert ws.unassigned(states, patrol_coldspots=False).tolist() == [3]
    assert ws.unassigned(states, patrol_coldspots=True).tolist() == [0, 3, 4]
    ws.served = {3}
    assert 3 in ws.unassigned(states, False)    # emergencies stay open even after a patrol visit


def test_bad_arguments():
    sc = _line_scenario()
    with pytest.raises(ValueError):
        Simulation(sc, _no_hotspots(), "ant-colony", 1, 0)
    with pytest.raises(ValueError):
        Simulation(sc, _no_hotspots(), "imp-greedy", 0, 0)
    with pytest.raises(ValueError):
        Simulation(sc, _no_hotspots(), "imp-greedy", 1, 0, days=[])


# ---------------------------------------------------------------- invariants on a busy world

@pytest.fixture(scope="module")
def busy():
    p = SyntheticParams(n_days=2, call_rate=40)
    sc = generate_synthetic(p, 5)
    rng = np.random.default_rng(0)
    hm = HotspotMap(rng.random((2, 12, 94)) < 0.2)
    cfg = SimConfig(optimizer=FAST)
    logs = {name: run(sc, hm, name, 4, 11, cfg) for name in PLANNERS}
    return sc, cfg, logs


def _per_officer(log):
    out = defaultdict(list)
    for e in log.events:
        if e.officer_id >= 0:
            out[e.officer_id].append(e)
    return out


def test_officer_event_sequences_are_consistent(busy):
    sc, cfg, logs = busy
    for log in logs.values():
        for evs in _per_officer(log).values():
            assert all(a.time <= b.time for a, b in zip(evs, evs[1:]))
            state = "idle"
            for e in evs:
                if e.event == "dispatch":
                    assert state == "idle"
                    state = "travel"
                elif e.event == "arrival":
                    assert state == "travel"
                    state = "arrived"
                elif e.event == "visit_start":
                    assert state == "arrived"
                    state = "visit"
                elif e.event == "visit_end":
                    assert state == "visit"
                    state = "idle"
                elif e.event == "shift_end":
                    state = "idle"


def test_no_node_is_claimed_twice(busy):
    sc, cfg, logs = busy
    for log in logs.values():
        spans = defaultdict(list)
        for o, evs in _per_officer(log).items():
            start = None
            for e in evs:
                if e.event == "dispatch":
                    start, node = e.time, e.node_id
                elif e.event == "visit_end":
                    spans[node].append((start, e.time))
        for iv in spans.values():
            iv.sort()
            assert all(a[1] <= b[0] for a, b in zip(iv, iv[1:]))


def test_no_teleporting(busy):
    sc, cfg, logs = busy
    c = sc.grid.centroids()
    from patrolplan.domain import haversine_m
    dist = haversine_m(c[:, None, 0], c[:, None, 1], c[None, :, 0], c[None, :, 1])
    minutes = dist / cfg.speed / 60
    for log in logs.values():
        for o, evs in _per_officer(log).items():
            pos, disp = cfg.start_cell, None
            for e in evs:
                if e.event == "dispatch":
                    disp = (e.time, pos)
                elif e.event == "arrival":
                    assert e.time - disp[0] >= minutes[disp[1], e.node_id] - 1e-9
                    pos = e.node_id
                elif e.event == "call_attended":
                    if log.events and e.time - e.delay_min <= disp[0]:
                        assert e.delay_min >= minutes[disp[1], e.node_id] - 1e-9
                elif e.event == "shift_end":
                    pos = cfg.start_cell


def test_activity_within_shift(busy):
    sc, cfg, logs = busy
    for log in logs.values():
        for e in log.events:
            tod = e.time - 1440 * (e.time // 1440)
            assert cfg.shift_start <= tod <= cfg.shift_end


def test_calls_are_conserved(busy):
    sc, cfg, logs = busy
    for log in logs.values():
        ids = [e.call_id for e in log.events if e.event in ("call_attended", "call_unattended")]
        assert sorted(ids) == list(range(len(sc.calls)))
        for e in log.of_kind("call_attended"):
            assert e.delay_min >= 0


def test_determinism_and_csv_round_trip(tmp_path, busy):
    sc, cfg, logs = busy
    hm = HotspotMap(np.random.default_rng(0).random((2, 12, 94)) < 0.2)
    again = run(sc, hm, "glerk-cs", 4, 11, cfg)
    logs["glerk-cs"].to_csv(tmp_path / "a.csv")
    again.to_csv(tmp_path / "b.csv")
    assert filecmp.cmp(tmp_path / "a.csv", tmp_path / "b.csv", shallow=False)
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join(EVENT_COLUMNS)
    back = EventLog.from_csv(tmp_path / "a.csv", sc.epoch)
    assert [(e.time, e.event, e.node_id) for e in back.events] == \
        [(e.time, e.event, e.node_id) for e in logs["glerk-cs"].events]


def test_config_validation():
    from patrolplan.domain import ConfigError
    with pytest.raises(ConfigError):
        SimConfig(speed=0)
    with pytest.raises(ConfigError):
        SimConfig(shift_start=1300, shift_end=1200)
    with pytest.raises(ConfigError):
        SimConfig(stay_minutes={NodeState.HOTSPOT: -1})


def test_patrol_rounds_restart_once_everything_is_served():
    def first_slot_visits(rounds):
        cfg = SimConfig(patrol_rounds=rounds)
        log = run(_line_scenario(), _no_hotspots(), "imp-greedy", 1, 0, cfg)
        return [e.node_id for e in log.of_kind("visit_start") if e.time < 600]
    once = first_slot_visits(False)
    assert sorted(once) == [0, 1, 2]
    again = first_slot_visits(True)
    assert len(again) > 3 and again[:3] == once

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from patrolplan.domain import benefit_value  # noqa: E402
from patrolplan.encoding import PlanningProblem  # noqa: E402

DATA = Path(__file__).parent / "data"


def random_instance(seed: int, n_nodes: int | None = None, n_officers: int = 2, n_cells: int = 12) -> dict:
    """Small planning instance as a plain dict (see :func:`to_problem`).

    Cells are random points in a 2 km square; travel is Euclidean minutes at
    walking pace.  Some nodes are emergencies with a pending call, and the
    shift end is tight enough that not every node fits.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9)) if n_nodes is None else n_nodes
    pts = rng.uniform(0, 2000, size=(n_cells, 2))
    travel = np.linalg.norm(pts[:, None] - pts[None], axis=2) / 72.0   # 1.2 m/s in m/min
    node_cell = rng.choice(n_cells, size=n, replace=False)
    state = rng.choice([0, 1, 2], size=n, p=[0.4, 0.35, 0.25])
    prio = np.where(state == 2, rng.integers(1, 6, size=n), 1)
    w = rng.choice([0.0, 1 / 3, 2 / 3, 1.0], size=n)
    clock = 600.0
    call_time = np.where(state == 2, clock - rng.uniform(0, 20, size=n), np.nan)
    return {
        "travel": travel.tolist(),
        "officer_cell": [int(c) for c in rng.choice(n_cells, size=n_officers)],
        "officer_ids": list(range(n_officers)),
        "ready": clock,
        "node_cell": [int(c) for c in node_cell],
        "state": [int(s) for s in state],
        "priority": [int(p) for p in prio],
        "benefit": [float(b) for b in benefit_value(w, prio, np.array([0.0, 2.0, 4.0])[state])],
        "call_time": [float(t) for t in call_time],
        "stay": [10.0] * n,
        "shift_end": clock + float(rng.uniform(60, 150)),
    }


def to_problem(inst: dict) -> PlanningProblem:
    return PlanningProblem(
        travel=np.asarray(inst["travel"]),
        officer_cell=inst["officer_cell"],
        officer_ready=inst["ready"],
        node_cell=inst["node_cell"],
        node_state=inst["state"],
        node_benefit=inst["benefit"],
        shift_end=inst["shift_end"],
        node_priority=inst["priority"],
        node_call_time=inst["call_time"],
        node_stay=inst["stay"],
        officer_ids=inst["officer_ids"],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])

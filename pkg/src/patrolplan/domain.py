"""Core spatial/temporal types, node reward and lookup tables."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

log = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_008.8
SLOT_MINUTES = 120
SLOTS_PER_DAY = 24 * 60 // SLOT_MINUTES
DEFAULT_SPEED_MPS = 1.2
DEFAULT_STAY_MIN = 10.0
IMPORTANCE_WINDOW_DAYS = 3


class ConfigError(ValueError):
    """Raised for invalid configuration values (speed, rates, ranges)."""


class NodeState(enum.IntEnum):
    COLDSPOT = 0
    HOTSPOT = 1
    EMERGENCY = 2


RISK_LAMBDA = {NodeState.COLDSPOT: 0.0, NodeState.HOTSPOT: 2.0, NodeState.EMERGENCY: 4.0}


class OfficerStatus(enum.Enum):
    IDLE = "idle"
    TRAVELLING = "travelling"
    VISITING = "visiting"
    OFF_DUTY = "off_duty"


_ALLOWED_TRANSITIONS = {
    OfficerStatus.IDLE: {OfficerStatus.TRAVELLING},
    OfficerStatus.TRAVELLING: {OfficerStatus.VISITING},
    OfficerStatus.VISITING: {OfficerStatus.IDLE},
    OfficerStatus.OFF_DUTY: set(),
}


def can_transition(src: OfficerStatus, dst: OfficerStatus) -> bool:
    if dst is OfficerStatus.OFF_DUTY:
        return True
    return dst in _ALLOWED_TRANSITIONS[src]


@dataclass(frozen=True)
class LatLon:
    lat: float
    lon: float


@dataclass(frozen=True)
class PatrolNode:
    id: int
    centroid: LatLon
    state: NodeState = NodeState.COLDSPOT
    importance_w: float = 0.0
    priority_p: int = 1
    stay_time_a: float = DEFAULT_STAY_MIN

    def __post_init__(self):
        if self.importance_w < 0:
            raise ValueError("importance must be non-negative")
        if not 1 <= self.priority_p <= 5:
            raise ValueError(f"priority {self.priority_p} outside 1..5")
        if self.state is not NodeState.EMERGENCY and self.priority_p != 1:
            raise ValueError("only emergency nodes carry a priority above 1")

    @property
    def risk_lambda(self) -> float:
        return RISK_LAMBDA[self.state]


@dataclass(frozen=True)
class GridMap:
    """Equal lat/lon tiling of a bounding box, row-major cell ids."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    rows: int
    cols: int
    cells: tuple[PatrolNode, ...] = field(repr=False)

    def __post_init__(self):
        if len(self.cells) != self.rows * self.cols:
            raise ValueError("cell count does not match rows*cols")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def cell_height_deg(self) -> float:
        return (self.max_lat - self.min_lat) / self.rows

    @property
    def cell_width_deg(self) -> float:
        return (self.max_lon - self.min_lon) / self.cols

    @property
    def cell_area(self) -> float:
        """Area of one cell in square metres (spherical band approximation)."""
        lat0 = math.radians(self.min_lat)
        lat1 = math.radians(self.min_lat + self.cell_height_deg)
        dlon = math.radians(self.cell_width_deg)
        return abs(EARTH_RADIUS_M**2 * dlon * (math.sin(lat1) - math.sin(lat0)))

    def centroids(self) -> np.ndarray:
        return np.array([[c.centroid.lat, c.centroid.lon] for c in self.cells])

    def travel_matrix(self, speed: float = DEFAULT_SPEED_MPS) -> np.ndarray:
        """Pairwise centroid travel times in minutes."""
        c = self.centroids()
        return haversine_m(c[:, None, 0], c[:, None, 1], c[None, :, 0], c[None, :, 1]) / _check_speed(speed) / 60.0


@dataclass(frozen=True)
class Officer:
    id: int
    position: LatLon
    status: OfficerStatus = OfficerStatus.IDLE
    speed: float = DEFAULT_SPEED_MPS
    shift_start: float = 8 * 60.0
    shift_end: float = 20 * 60.0
    salary_rho: float = 0.0


@dataclass(frozen=True)
class EmergencyCall:
    id: int
    node_id: int
    call_time: datetime
    call_type: str
    priority: int

    @classmethod
    def from_type(cls, id: int, node_id: int, call_time: datetime, call_type: str) -> "EmergencyCall":
        return cls(id, node_id, call_time, call_type, priority_of(call_type))


@dataclass(frozen=True)
class TimeInterval:
    day: int
    slot: int
    planning_horizon_T: float = 12 * 60.0

    def __post_init__(self):
        if not 0 <= self.slot < SLOTS_PER_DAY:
            raise ValueError(f"slot {self.slot} outside 0..{SLOTS_PER_DAY - 1}")

    @property
    def start_minute(self) -> int:
        return self.day * 24 * 60 + self.slot * SLOT_MINUTES


def slot_of(ts: datetime) -> int:
    return (ts.hour * 60 + ts.minute) // SLOT_MINUTES


# Response-type priority table (Dallas call priority scheme).
PRIORITY_TABLE: dict[int, tuple[str, ...]] = {
    1: ("False Alarms", "Nauisance Mischief", "Nuisance Mischief", "Missing Person",
        "Missing Property", "Trespass", "Fraud call", "Mental health", "prowl"),
    2: ("Animal complaints", "Theft", "Disturbances", "hazards", "shoplifting",
        "property damage", "suspicious circumstances"),
    3: ("Burglary", "Liquor violations", "Narcotics complaints"),
    4: ("Assaults", "Sex Offender", "Prostitution", "Reckless burning", "Robbery",
        "Threats", "Harassment"),
    5: ("Accident", "Arrest", "Homicide", "Person Down/Injury", "Weapons calls"),
}
_PRIORITY_LOOKUP = {t.casefold(): p for p, types in PRIORITY_TABLE.items() for t in types}


def priority_of(call_type: str) -> int:
    """Priority 1..5 of a response call type; unknown types are priority 1."""
    if not call_type or not call_type.strip():
        raise ValueError("call_type must be non-empty")
    p = _PRIORITY_LOOKUP.get(call_type.strip().casefold())
    if p is None:
        log.debug("unknown call type %r mapped to priority 1", call_type)
        return 1
    return p


def benefit(node: PatrolNode) -> float:
    return benefit_value(node.importance_w, node.priority_p, node.risk_lambda)


def benefit_value(w, p, lam):
    """exp(w) * p * exp(lambda); broadcasts over arrays."""
    return np.exp(w) * p * np.exp(lam)


# rows: delay bands; columns: priority 1..5
ARRIVAL_TABLE = np.array(
    [
        [1.0, 1.0, 1.0, 1.0, 1.0],  # delay < 15
        [0.8, 0.8, 0.8, 0.0, 0.0],  # 15 <= delay <= 30
        [0.6, 0.6, 0.0, 0.0, 0.0],  # 30 < delay < 60
        [0.5, 0.0, 0.0, 0.0, 0.0],  # delay >= 60
    ]
)


def delay_band(delay):
    delay = np.asarray(delay, dtype=float)
    return np.where(delay < 15, 0, np.where(delay <= 30, 1, np.where(delay < 60, 2, 3)))


def arrival_multiplier(delay, priority):
    """Credit fraction for reaching a call ``delay`` minutes after it was made."""
    if np.any(np.asarray(delay) < 0):
        raise ValueError("delay must be non-negative")
    out = ARRIVAL_TABLE[delay_band(delay), np.asarray(priority) - 1]
    return float(out) if np.ndim(out) == 0 else out


def haversine_m(lat1, lon1, lat2, lon2):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    a = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def _check_speed(speed: float) -> float:
    if not speed > 0:
        raise ConfigError(f"speed must be positive, got {speed}")
    return speed


def travel_time(a: LatLon, b: LatLon, speed: float = DEFAULT_SPEED_MPS) -> float:
    """Great-circle travel time in minutes."""
    _check_speed(speed)
    return float(haversine_m(a.lat, a.lon, b.lat, b.lon)) / speed / 60.0

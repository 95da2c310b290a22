"""Record loading, grid construction/binning and synthetic scenario generation."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .domain import PRIORITY_TABLE, SLOT_MINUTES, GridMap, LatLon, PatrolNode

log = logging.getLogger(__name__)

OUT_OF_BOUNDS = -1

CRIME_COLUMNS = ("timestamp", "lat", "lon", "offense_type")
CHECKIN_COLUMNS = ("timestamp", "lat", "lon", "user_id", "venue_id")
POI_COLUMNS = ("venue_id", "lat", "lon", "category")
CALL_COLUMNS = ("timestamp", "lat", "lon", "call_type")


class LoadError(Exception):
    pass


@dataclass(frozen=True, order=True)
class CrimeRecord:
    timestamp: datetime
    lat: float
    lon: float
    offense_type: str


@dataclass(frozen=True, order=True)
class CheckinRecord:
    timestamp: datetime
    lat: float
    lon: float
    user_id: str
    venue_id: str


@dataclass(frozen=True, order=True)
class PoiRecord:
    venue_id: str
    lat: float
    lon: float
    category: str


@dataclass(frozen=True, order=True)
class CallRecord:
    timestamp: datetime
    lat: float
    lon: float
    call_type: str


@dataclass
class Loaded:
    """Records parsed from one file plus the number of malformed rows skipped."""

    records: list
    skipped: int = 0

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


# ---------------------------------------------------------------- grid

def build_grid(bbox: Sequence[float], rows: int, cols: int) -> GridMap:
    """Tile ``bbox = (min_lat, min_lon, max_lat, max_lon)`` into rows x cols cells."""
    min_lat, min_lon, max_lat, max_lon = map(float, bbox)
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if not (max_lat > min_lat and max_lon > min_lon):
        raise ValueError(f"degenerate bounding box {bbox}")
    dlat = (max_lat - min_lat) / rows
    dlon = (max_lon - min_lon) / cols
    cells = []
    for r in range(rows):
        for c in range(cols):
            centroid = LatLon(min_lat + (r + 0.5) * dlat, min_lon + (c + 0.5) * dlon)
            cells.append(PatrolNode(id=r * cols + c, centroid=centroid))
    return GridMap(min_lat, min_lon, max_lat, max_lon, rows, cols, tuple(cells))


def _axis_index(x, lo, step, n):
    # points on an interior boundary go to the lower-index cell
    k = np.ceil((x - lo) / step).astype(int) - 1
    return np.clip(k, 0, n - 1)


def bin_points(lat, lon, grid: GridMap) -> np.ndarray:
    """Vectorised :func:`bin`; out-of-bbox points map to ``OUT_OF_BOUNDS``."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    inside = (lat >= grid.min_lat) & (lat <= grid.max_lat) & (lon >= grid.min_lon) & (lon <= grid.max_lon)
    r = _axis_index(lat, grid.min_lat, grid.cell_height_deg, grid.rows)
    c = _axis_index(lon, grid.min_lon, grid.cell_width_deg, grid.cols)
    return np.where(inside, r * grid.cols + c, OUT_OF_BOUNDS)


def bin(point: LatLon, grid: GridMap) -> int:
    return int(bin_points(point.lat, point.lon, grid))


# ---------------------------------------------------------------- csv io

def _parse_ts(s: str) -> datetime:
    return datetime.fromisoformat(s.strip())


def _load(path, columns, make: Callable[[dict], object], sort_key=None) -> Loaded:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: file not found")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(h.strip() for h in (reader.fieldnames or ()))
        if header != columns:
            raise LoadError(f"{path}: header {header} does not match expected {columns}")
        out, skipped = [], 0
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(make(row))
            except (TypeError, ValueError) as exc:
                skipped += 1
                log.warning("%s:%d skipped (%s)", path, lineno, exc)
    out.sort(key=sort_key)
    return Loaded(out, skipped)


def _text(v) -> str:
    if v is None:
        raise ValueError("missing field")
    return v


def load_crimes(path) -> Loaded:
    return _load(path, CRIME_COLUMNS, lambda r: CrimeRecord(
        _parse_ts(r["timestamp"]), float(r["lat"]), float(r["lon"]), _text(r["offense_type"])))


def load_checkins(path) -> Loaded:
    return _load(path, CHECKIN_COLUMNS, lambda r: CheckinRecord(
        _parse_ts(r["timestamp"]), float(r["lat"]), float(r["lon"]), _text(r["user_id"]), _text(r["venue_id"])))


def load_pois(path) -> Loaded:
    return _load(path, POI_COLUMNS, lambda r: PoiRecord(
        _text(r["venue_id"]), float(r["lat"]), float(r["lon"]), _text(r["category"])),
        sort_key=lambda p: p.venue_id)


def load_calls(path) -> Loaded:
    return _load(path, CALL_COLUMNS, lambda r: CallRecord(
        _parse_ts(r["timestamp"]), float(r["lat"]), float(r["lon"]), _text(r["call_type"])))


def _fmt(v):
    if isinstance(v, datetime):
        return v.isoformat(timespec="seconds")
    if isinstance(v, float):
        return repr(v)
    return v


def write_records(path, records, columns) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for rec in records:
            w.writerow([_fmt(getattr(rec, c)) for c in columns])
    tmp.replace(path)


# ---------------------------------------------------------------- scenario

@dataclass
class Scenario:
    grid: GridMap
    start: date
    n_days: int
    crimes: list = field(default_factory=list)
    checkins: list = field(default_factory=list)
    pois: list = field(default_factory=list)
    calls: list = field(default_factory=list)
    slot_minutes: int = SLOT_MINUTES
    dropped: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("scenario date range is empty")
        self.crimes = self._keep_valid("crimes", self.crimes, timed=True)
        self.checkins = self._keep_valid("checkins", self.checkins, timed=True)
        self.pois = self._keep_valid("pois", self.pois, timed=False)
        self.calls = self._keep_valid("calls", self.calls, timed=True)

    @property
    def epoch(self) -> datetime:
        return datetime(self.start.year, self.start.month, self.start.day)

    @property
    def end(self) -> date:
        return self.start + timedelta(days=self.n_days)

    def minute_of(self, ts: datetime) -> float:
        return (ts - self.epoch).total_seconds() / 60.0

    def _keep_valid(self, name, records, timed):
        if not records:
            self.dropped[name] = 0
            return []
        nodes = bin_points([r.lat for r in records], [r.lon for r in records], self.grid)
        keep = nodes != OUT_OF_BOUNDS
        if timed:
            t = np.array([self.minute_of(r.timestamp) for r in records])
            keep &= (t >= 0) & (t < self.n_days * 1440)
        self.dropped[name] = int((~keep).sum())
        if self.dropped[name]:
            log.info("dropped %d %s records outside grid/date range", self.dropped[name], name)
        return [r for r, k in zip(records, keep) if k]

    # array views used by features / simulation
    def node_of(self, records) -> np.ndarray:
        if not records:
            return np.zeros(0, dtype=int)
        return bin_points([r.lat for r in records], [r.lon for r in records], self.grid)

    def minutes_of(self, records) -> np.ndarray:
        return np.array([self.minute_of(r.timestamp) for r in records], dtype=float)

    def crime_counts(self) -> np.ndarray:
        """Crime counts indexed [day, slot, node]."""
        slots = 1440 // self.slot_minutes
        out = np.zeros((self.n_days, slots, self.grid.n_cells), dtype=int)
        if self.crimes:
            t = self.minutes_of(self.crimes)
            day = (t // 1440).astype(int)
            slot = ((t % 1440) // self.slot_minutes).astype(int)
            np.add.at(out, (day, slot, self.node_of(self.crimes)), 1)
        return out

    def subset(self, first_day: int, n_days: int) -> "Scenario":
        """Scenario restricted to ``[first_day, first_day + n_days)``."""
        lo = self.epoch + timedelta(days=first_day)
        hi = lo + timedelta(days=n_days)

        def cut(recs):
            return [r for r in recs if lo <= r.timestamp < hi]

        return Scenario(self.grid, lo.date(), n_days, cut(self.crimes), cut(self.checkins),
                        list(self.pois), cut(self.calls), self.slot_minutes)


# ---------------------------------------------------------------- synthetic

# a compact police-sector-sized box (about 0.6 km x 2.8 km) split into 2 x 47 cells
SECTOR_BBOX = (47.6000, -122.3300, 47.6054, -122.2922)
OFFENSE_TYPES = ("THEFT", "BURGLARY", "ASSAULT", "VEHICLE THEFT", "VANDALISM", "ROBBERY")
VENUE_CATEGORIES = ("Food", "Nightlife", "Shop", "Office", "Residence", "Outdoors", "Travel", "Arts")


@dataclass(frozen=True)
class SyntheticParams:
    rows: int = 2
    cols: int = 47
    bbox: tuple = SECTOR_BBOX
    n_days: int = 28
    crime_rate: float = 0.05   # mean crimes per node per 2h slot
    call_rate: float = 30.0    # calls per day (inside the 8am-8pm shift)
    n_users: int = 200
    n_venues: int = 300
    checkin_rate: float = 0.5  # check-ins per user per day
    hotspot_fraction: float = 0.2
    hotspot_share: float = 0.8
    hotspot_spread: float = 0.0  # >0 clusters hot columns around a random centre (in columns)
    start: date = date(2013, 1, 7)
    call_hours: tuple = (8, 20)

    def __post_init__(self):
        for name in ("crime_rate", "call_rate", "checkin_rate"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if not 0 < self.hotspot_fraction <= 1 or not 0 <= self.hotspot_share <= 1:
            raise ValueError("hotspot fraction/share out of range")
        if self.hotspot_spread < 0:
            raise ValueError("hotspot_spread must be >= 0")


def node_intensity(p: SyntheticParams, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-node crime rate per slot and the boolean hotspot class of each node."""
    n = p.rows * p.cols
    n_hot = max(1, round(p.hotspot_fraction * n))
    hot = np.zeros(n, dtype=bool)
    if p.hotspot_spread > 0:
        col = np.arange(n) % p.cols
        centre = rng.integers(p.cols)
        weight = np.exp(-0.5 * ((col - centre) / p.hotspot_spread) ** 2) + 1e-9
        hot[rng.choice(n, size=n_hot, replace=False, p=weight / weight.sum())] = True
    else:
        hot[rng.choice(n, size=n_hot, replace=False)] = True
    total = p.crime_rate * n
    lam = np.empty(n)
    lam[hot] = total * p.hotspot_share / n_hot
    lam[~hot] = total * (1 - p.hotspot_share) / max(n - n_hot, 1)
    return lam, hot


def _point_in_cell(grid: GridMap, node: np.ndarray, rng: np.random.Generator):
    r, c = np.divmod(node, grid.cols)
    u = rng.uniform(0.05, 0.95, size=(2, len(node)))
    lat = grid.min_lat + (r + u[0]) * grid.cell_height_deg
    lon = grid.min_lon + (c + u[1]) * grid.cell_width_deg
    return np.round(lat, 7), np.round(lon, 7)


def generate_synthetic(params: SyntheticParams, seed: int) -> Scenario:
    """Reproducible scenario with persistent hotspots (Poisson crimes per node-slot)."""
    rng = np.random.default_rng(seed)
    p = params
    grid = build_grid(p.bbox, p.rows, p.cols)
    n = grid.n_cells
    epoch = datetime(p.start.year, p.start.month, p.start.day)
    lam, hot = node_intensity(p, rng)
    slots = 1440 // SLOT_MINUTES

    def stamp(minutes: np.ndarray) -> list[datetime]:
        return [epoch + timedelta(minutes=int(m)) for m in minutes]

    # crimes
    counts = rng.poisson(np.broadcast_to(lam, (p.n_days, slots, n)))
    day, slot, node = np.nonzero(counts)
    reps = counts[day, slot, node]
    day, slot, node = (np.repeat(a, reps) for a in (day, slot, node))
    minutes = day * 1440 + slot * SLOT_MINUTES + rng.integers(0, SLOT_MINUTES, size=len(day))
    lat, lon = _point_in_cell(grid, node, rng)
    kinds = rng.choice(len(OFFENSE_TYPES), size=len(day))
    crimes = [CrimeRecord(t, float(a), float(o), OFFENSE_TYPES[k])
              for t, a, o, k in zip(stamp(minutes), lat, lon, kinds)]

    # venues: half placed uniformly, half following crime intensity
    attract = 0.5 / n + 0.5 * lam / lam.sum() if lam.sum() > 0 else np.full(n, 1.0 / n)
    venue_node = rng.choice(n, size=p.n_venues, p=attract / attract.sum())
    vlat, vlon = _point_in_cell(grid, venue_node, rng)
    vcat = rng.choice(len(VENUE_CATEGORIES), size=p.n_venues)
    pois = [PoiRecord(f"v{i:05d}", float(a), float(o), VENUE_CATEGORIES[k])
            for i, (a, o, k) in enumerate(zip(vlat, vlon, vcat))]

    # check-ins: hot nodes' venues are busier
    checkins = []
    if p.n_venues and p.n_users:
        vweight = np.where(hot[venue_node], 3.0, 1.0)
        vweight /= vweight.sum()
        diurnal = np.array([0.2, 0.1, 0.4, 1.0, 1.2, 1.3, 1.2, 1.1, 1.4, 1.5, 1.0, 0.5])
        diurnal /= diurnal.sum()
        per_day = rng.poisson(p.checkin_rate * p.n_users, size=p.n_days)
        for d, k in enumerate(per_day):
            users = rng.integers(0, p.n_users, size=k)
            venues = rng.choice(p.n_venues, size=k, p=vweight)
            sl = rng.choice(slots, size=k, p=diurnal)
            mins = d * 1440 + sl * SLOT_MINUTES + rng.integers(0, SLOT_MINUTES, size=k)
            for t, u, v in zip(stamp(mins), users, venues):
                checkins.append(CheckinRecord(t, pois[v].lat, pois[v].lon, f"u{u:05d}", pois[v].venue_id))

    # emergency calls inside the shift window, located like crimes
    calls = []
    if p.call_rate > 0:
        cw = lam + 0.1 * lam.mean() + 1e-12
        cw /= cw.sum()
        lo_h, hi_h = p.call_hours
        per_day = rng.poisson(p.call_rate, size=p.n_days)
        for d, k in enumerate(per_day):
            cnode = rng.choice(n, size=k, p=cw)
            mins = d * 1440 + rng.integers(lo_h * 60, hi_h * 60, size=k)
            prio = rng.integers(1, 6, size=k)
            clat, clon = _point_in_cell(grid, cnode, rng)
            for t, a, o, pr in zip(stamp(mins), clat, clon, prio):
                types = PRIORITY_TABLE[int(pr)]
                calls.append(CallRecord(t, float(a), float(o), types[rng.integers(len(types))]))

    crimes.sort()
    checkins.sort()
    calls.sort()
    return Scenario(grid, p.start, p.n_days, crimes, checkins, pois, calls)


def ground_truth_hotspots(params: SyntheticParams, seed: int) -> np.ndarray:
    """Generating hotspot class of each node for ``generate_synthetic(params, seed)``."""
    return node_intensity(params, np.random.default_rng(seed))[1]


def write_scenario(scenario: Scenario, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "crimes": (scenario.crimes, CRIME_COLUMNS),
        "checkins": (scenario.checkins, CHECKIN_COLUMNS),
        "pois": (scenario.pois, POI_COLUMNS),
        "calls": (scenario.calls, CALL_COLUMNS),
    }
    paths = {}
    for name, (recs, cols) in files.items():
        paths[name] = out / f"{name}.csv"
        write_records(paths[name], recs, cols)
    return paths


def load_scenario(paths: dict, grid: GridMap, start: date, n_days: int) -> tuple[Scenario, dict[str, int]]:
    """Load the four CSVs into a scenario; returns it with per-file skip counts."""
    loaders = {"crimes": load_crimes, "checkins": load_checkins, "pois": load_pois, "calls": load_calls}
    loaded = {k: fn(paths[k]) for k, fn in loaders.items()}
    sc = Scenario(grid, start, n_days, **{k: v.records for k, v in loaded.items()})
    return sc, {k: v.skipped for k, v in loaded.items()}


def bbox_for_cells(rows: int, cols: int, cell_m: float, origin=(47.60, -122.38)) -> tuple:
    """Bounding box whose cells are roughly ``cell_m`` metres square."""
    lat0, lon0 = origin
    dlat = cell_m / 111_195.0
    dlon = cell_m / (111_195.0 * math.cos(math.radians(lat0)))
    return (lat0, lon0, lat0 + rows * dlat, lon0 + cols * dlon)

"""Per (node, 2-hour slot) predictor features and class balancing.

Column order of every feature matrix is :func:`feature_names`:

    h1_30d, h2_7d, poi_<category>..., poi_density, location_diversity,
    visitor_entropy, visitor_homogeneity, region_popularity, visitor_ratio,
    user_count, observation_frequency
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import IMPORTANCE_WINDOW_DAYS, TimeInterval
from .ingest import Scenario

MOBILITY_NAMES = ("visitor_entropy", "visitor_homogeneity", "region_popularity",
                  "visitor_ratio", "user_count", "observation_frequency")


def feature_names(categories) -> list[str]:
    return (["h1_30d", "h2_7d"] + [f"poi_{c}" for c in categories]
            + ["poi_density", "location_diversity"] + list(MOBILITY_NAMES))


@dataclass(frozen=True)
class FeatureRow:
    node: int
    interval: TimeInterval
    h1: float
    h2: float
    poi_distribution: tuple
    poi_density: float
    location_diversity: float
    visitor_entropy: float
    visitor_homogeneity: float
    region_popularity: float
    visitor_ratio: float
    user_count: int
    observation_frequency: int
    label: bool

    def vector(self) -> np.ndarray:
        return np.array([self.h1, self.h2, *self.poi_distribution, self.poi_density,
                         self.location_diversity, self.visitor_entropy, self.visitor_homogeneity,
                         self.region_popularity, self.visitor_ratio, self.user_count,
                         self.observation_frequency], dtype=float)


@dataclass
class FeatureSet:
    """Column-major storage of many FeatureRows."""

    X: np.ndarray
    y: np.ndarray
    day: np.ndarray
    slot: np.ndarray
    node: np.ndarray
    names: list

    def __len__(self):
        return len(self.y)

    def take(self, idx) -> "FeatureSet":
        idx = np.asarray(idx)
        return FeatureSet(self.X[idx], self.y[idx], self.day[idx], self.slot[idx], self.node[idx], self.names)

    def row(self, i: int) -> FeatureRow:
        n_cat = len(self.names) - 10
        x = self.X[i]
        return FeatureRow(int(self.node[i]), TimeInterval(int(self.day[i]), int(self.slot[i])),
                          x[0], x[1], tuple(x[2:2 + n_cat]), *x[2 + n_cat:8 + n_cat],
                          int(x[8 + n_cat]), int(x[9 + n_cat]), bool(self.y[i]))

    def rows(self):
        return [self.row(i) for i in range(len(self))]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "day", "slot", *self.names, "label"])
            for i in range(len(self)):
                w.writerow([int(self.node[i]), int(self.day[i]), int(self.slot[i]),
                            *(repr(float(v)) for v in self.X[i]), int(self.y[i])])


# ---------------------------------------------------------------- historical

def historical_density(counts: np.ndarray, node: int, slot: int, day: int, window_days: int) -> float:
    """Mean daily crimes in ``(node, slot)`` over the ``window_days`` days before ``day``.

    ``counts`` is indexed [day, slot, node]; days before the data start count 0.
    """
    if window_days not in (7, 30):
        raise ValueError("window_days must be 7 or 30")
    lo = max(day - window_days, 0)
    return float(counts[lo:day, slot, node].sum()) / window_days


def rolling_density(counts: np.ndarray, window_days: int) -> np.ndarray:
    """``historical_density`` for every [day, slot, node] at once."""
    csum = np.concatenate([np.zeros((1,) + counts.shape[1:]), np.cumsum(counts, axis=0)])
    days = np.arange(counts.shape[0])
    lo = np.maximum(days - window_days, 0)
    return (csum[days] - csum[lo]) / window_days


def importance(counts: np.ndarray, day: int, slot: int) -> np.ndarray:
    """Per-node importance: crimes in this slot over the previous 3 days, per day."""
    lo = max(day - IMPORTANCE_WINDOW_DAYS, 0)
    return counts[lo:day, slot, :].sum(axis=0) / IMPORTANCE_WINDOW_DAYS


# ---------------------------------------------------------------- poi

def entropy_bits(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def poi_features(categories_in_node, categories, cell_area_km2: float):
    """(distribution over ``categories``, venues per km², category entropy in bits)."""
    index = {c: i for i, c in enumerate(categories)}
    counts = np.zeros(len(categories))
    for c in categories_in_node:
        counts[index[c]] += 1
    total = counts.sum()
    if total == 0:
        return counts, 0.0, 0.0
    return counts / total, total / cell_area_km2, entropy_bits(counts)


# ---------------------------------------------------------------- mobility

def visitor_homogeneity(user_venue_counts: dict) -> float:
    """Mean pairwise cosine similarity of users' venue-visit count vectors."""
    users = list(user_venue_counts)
    if not users:
        return 0.0
    if len(users) == 1:
        return 1.0
    venues = sorted({v for c in user_venue_counts.values() for v in c})
    vidx = {v: i for i, v in enumerate(venues)}
    M = np.zeros((len(users), len(venues)))
    for i, u in enumerate(users):
        for v, k in user_venue_counts[u].items():
            M[i, vidx[v]] = k
    M /= np.linalg.norm(M, axis=1, keepdims=True)
    S = M @ M.T
    n = len(users)
    return float((S.sum() - np.trace(S)) / (n * (n - 1)))


def mobility_features(checkins, slot_total: int, seen_before: set):
    """Mobility features of one node-slot.

    ``checkins`` is a sequence of ``(user, venue)`` pairs made in the node during
    the slot, ``slot_total`` the check-ins in all nodes during the slot and
    ``seen_before`` the users who checked in at this node before the slot.
    Returns ``(D1, D2, D3, D4, |U|, |CH|)``.
    """
    n_ch = len(checkins)
    if n_ch == 0:
        return 0.0, 0.0, 0.0, 0.0, 0, 0
    per_user: dict = defaultdict(lambda: defaultdict(int))
    for u, v in checkins:
        per_user[u][v] += 1
    user_counts = [sum(c.values()) for c in per_user.values()]
    d1 = entropy_bits(user_counts)
    d2 = visitor_homogeneity(per_user)
    d3 = n_ch / slot_total
    d4 = sum(1 for u, _ in checkins if u not in seen_before) / n_ch
    return d1, d2, d3, d4, len(per_user), n_ch


# ---------------------------------------------------------------- assembly

def build_features(scenario: Scenario, days=None, categories=None) -> FeatureSet:
    """Feature rows for every (day, slot, node) in ``days`` (default: all)."""
    grid = scenario.grid
    n = grid.n_cells
    S = 1440 // scenario.slot_minutes
    days = np.arange(scenario.n_days) if days is None else np.asarray(days)
    counts = scenario.crime_counts()
    h1 = rolling_density(counts, 30)
    h2 = rolling_density(counts, 7)

    if categories is None:
        categories = sorted({p.category for p in scenario.pois})
    poi_node = scenario.node_of(scenario.pois)
    by_node = defaultdict(list)
    for p, k in zip(scenario.pois, poi_node):
        by_node[int(k)].append(p.category)
    area_km2 = grid.cell_area / 1e6
    poi = np.zeros((n, len(categories) + 2))
    for k in range(n):
        dist, dens, div = poi_features(by_node.get(k, ()), categories, area_km2)
        poi[k, :len(categories)] = dist
        poi[k, -2:] = dens, div

    # mobility, computed chronologically so "new visitor" sees only the past
    mob = np.zeros((scenario.n_days, S, n, len(MOBILITY_NAMES)))
    groups = defaultdict(list)
    if scenario.checkins:
        t = scenario.minutes_of(scenario.checkins)
        cnode = scenario.node_of(scenario.checkins)
        for rec, m, k in zip(scenario.checkins, t, cnode):
            groups[(int(m // 1440), int((m % 1440) // scenario.slot_minutes))].append((int(k), rec.user_id, rec.venue_id))
    seen = defaultdict(set)
    for (d, s) in sorted(groups):
        g = groups[(d, s)]
        per_node = defaultdict(list)
        for k, u, v in g:
            per_node[k].append((u, v))
        for k, chk in per_node.items():
            mob[d, s, k] = mobility_features(chk, len(g), seen[k])
        for k, chk in per_node.items():
            seen[k].update(u for u, _ in chk)

    dd, ss, kk = (a.ravel() for a in np.meshgrid(days, np.arange(S), np.arange(n), indexing="ij"))
    X = np.column_stack([h1[dd, ss, kk], h2[dd, ss, kk], poi[kk], mob[dd, ss, kk]])
    y = counts[dd, ss, kk] > 0
    return FeatureSet(X, y, dd, ss, kk, feature_names(categories))


def undersample(fs: FeatureSet, seed: int) -> FeatureSet:
    """Keep every crime row and an equal-size uniform sample of no-crime rows."""
    pos = np.flatnonzero(fs.y)
    neg = np.flatnonzero(~fs.y)
    if len(pos) == 0:
        raise ValueError("no crime rows: cannot balance")
    if len(neg) < len(pos):
        raise ValueError("fewer no-crime rows than crime rows: cannot balance by undersampling")
    rng = np.random.default_rng(seed)
    keep_neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    return fs.take(np.sort(np.concatenate([pos, keep_neg])))


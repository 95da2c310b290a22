"""Leader-based random-keys encoding of multi-officer patrol plans.

A chromosome is a vector of real keys, one per officer entry and one per
node.  Sorting the entries by key (descending) and walking the list gives the
plan: an officer entry opens that officer's sub-tour and the following nodes
join it.  In the guided variant the list is split into two bands: hotspot and
emergency nodes carry keys in (0.5, 1], coldspot nodes keys in (0, 0.5], and
every officer has one entry in each band.  Each officer's sub-tour is its
hot-band run followed by its cold-band run.

All routines work on populations (2-D key arrays) so a whole GA/CS generation
is decoded with a handful of numpy calls; the single-chromosome functions are
thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .domain import ARRIVAL_TABLE, NodeState

HOT_BAND = (0.5, 1.0)
COLD_BAND = (0.0, 0.5)
FULL_BAND = (0.0, 1.0)


@dataclass(frozen=True, eq=False)
class PlanningProblem:
    """Idle officers and candidate nodes at one planning instant.

    Times are absolute minutes; ``travel`` holds cell-to-cell travel minutes.
    """

    travel: np.ndarray
    officer_cell: np.ndarray
    officer_ready: np.ndarray
    node_cell: np.ndarray
    node_state: np.ndarray
    node_benefit: np.ndarray
    shift_end: float
    node_priority: np.ndarray | None = None
    node_call_time: np.ndarray | None = None
    node_stay: np.ndarray | None = None
    officer_ids: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.node_cell)
        m = len(self.officer_cell)
        fix = object.__setattr__
        fix(self, "officer_cell", np.asarray(self.officer_cell, dtype=int))
        fix(self, "officer_ready", np.broadcast_to(np.asarray(self.officer_ready, dtype=float), (m,)).copy())
        fix(self, "node_cell", np.asarray(self.node_cell, dtype=int))
        fix(self, "node_state", np.asarray(self.node_state, dtype=int))
        fix(self, "node_benefit", np.asarray(self.node_benefit, dtype=float))
        fix(self, "node_priority", np.ones(n, dtype=int) if self.node_priority is None
            else np.asarray(self.node_priority, dtype=int))
        fix(self, "node_call_time", np.full(n, np.nan) if self.node_call_time is None
            else np.asarray(self.node_call_time, dtype=float))
        fix(self, "node_stay", np.full(n, 10.0) if self.node_stay is None
            else np.broadcast_to(np.asarray(self.node_stay, dtype=float), (n,)).copy())
        fix(self, "officer_ids", np.arange(m) if self.officer_ids is None
            else np.asarray(self.officer_ids, dtype=int))

    @property
    def n_officers(self) -> int:
        return len(self.officer_cell)

    @property
    def n_nodes(self) -> int:
        return len(self.node_cell)

    @cached_property
    def is_emergency(self) -> np.ndarray:
        return self.node_state == NodeState.EMERGENCY

    @cached_property
    def is_hot(self) -> np.ndarray:
        """Hotspot-band nodes (emergencies rank with hotspots)."""
        return self.node_state >= NodeState.HOTSPOT


class Layout:
    """Entity ordering for one problem: officer entries per band, then nodes."""

    def __init__(self, problem: PlanningProblem, guided: bool):
        if problem.n_officers < 1:
            raise ValueError("at least one officer is required")
        self.problem = problem
        self.guided = guided
        m, n = problem.n_officers, problem.n_nodes
        self.m, self.n = m, n
        self.nb = 2 if guided else 1
        self.bands = (HOT_BAND, COLD_BAND) if guided else (FULL_BAND,)
        self.n_off = self.nb * m
        self.K = self.n_off + n
        self.node_band = np.where(problem.is_hot, 0, 1) if guided else np.zeros(n, dtype=int)
        self.ent_band = np.concatenate([np.repeat(np.arange(self.nb), m), self.node_band])
        self.ent_is_off = np.arange(self.K) < self.n_off
        self.ent_officer = np.concatenate([np.tile(np.arange(m), self.nb), np.full(n, -1)])
        counts = np.bincount(self.ent_band, minlength=self.nb)
        self.band_start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.band_end = np.cumsum(counts)
        self.lo = np.array([b[0] for b in self.bands])[self.ent_band]
        self.hi = np.array([b[1] for b in self.bands])[self.ent_band]

    def clamp(self, keys: np.ndarray) -> np.ndarray:
        """Clamp keys into their half-open band (lo, hi]."""
        return np.clip(keys, np.nextafter(self.lo, self.hi), self.hi)

    def in_band(self, keys: np.ndarray) -> np.ndarray:
        keys = np.atleast_2d(keys)
        return np.all((keys > self.lo) & (keys <= self.hi), axis=1)


@dataclass
class Decoded:
    """Batch decode result; arrays are [population, n_nodes] in route order."""

    node_seq: np.ndarray
    owner_seq: np.ndarray
    arrival: np.ndarray
    first: np.ndarray
    order: np.ndarray

    def owner_by_node(self) -> np.ndarray:
        out = np.empty_like(self.owner_seq)
        out[np.arange(len(out))[:, None], self.node_seq] = self.owner_seq
        return out


def decode_batch(layout: Layout, keys: np.ndarray) -> Decoded:
    keys = np.atleast_2d(keys)
    P, K = keys.shape
    m, n, nb = layout.m, layout.n, layout.nb
    # bands occupy disjoint, descending key ranges, so sorting by -key (stable,
    # hence entity index on ties) already groups entities band by band
    order = np.argsort(-keys, axis=-1, kind="stable")
    rows = np.arange(P)[:, None]
    if m == 1:
        # one officer owns everything; orphans lead in the same key order
        node_seq = order[~layout.ent_is_off[order]].reshape(P, n) - layout.n_off
        owner_seq = np.zeros((P, n), dtype=int)
        return _timed(layout, node_seq, owner_seq, order)
    s_is_off = layout.ent_is_off[order]
    s_band = layout.ent_band[order]
    pos = np.where(s_is_off, np.arange(K), -1)
    last = np.maximum.accumulate(pos, axis=1)
    # sorted entities are grouped by band and every band holds all officers,
    # so an orphan's owner is the first officer of its band
    first_off = np.empty((P, nb), dtype=int)
    for b in range(nb):
        lo, hi = layout.band_start[b], layout.band_end[b]
        first_off[:, b] = lo + np.argmax(s_is_off[:, lo:hi], axis=1)
    orphan = last < layout.band_start[s_band]
    owner_pos = np.where(orphan, first_off[rows, s_band], last)
    owner = layout.ent_officer[order[rows, owner_pos]]

    is_node = ~s_is_off
    node_order = order[is_node].reshape(P, n) - layout.n_off
    node_owner = owner[is_node].reshape(P, n)
    g = np.argsort(node_owner, axis=1, kind="stable")
    node_seq = node_order[rows, g]
    owner_seq = node_owner[rows, g]
    return _timed(layout, node_seq, owner_seq, order)


def _timed(layout: Layout, node_seq, owner_seq, order) -> Decoded:
    """Attach arrival times to routes given in (owner, visit order) layout."""
    pr = layout.problem
    P, n = node_seq.shape
    if n == 0:
        empty = np.zeros((P, 0))
        return Decoded(node_seq, owner_seq, empty, empty.astype(bool), order)

    first = np.ones((P, n), dtype=bool)
    first[:, 1:] = owner_seq[:, 1:] != owner_seq[:, :-1]
    cur_cell = pr.node_cell[node_seq]
    prev_cell = np.empty_like(cur_cell)
    prev_cell[:, 1:] = cur_cell[:, :-1]
    prev_cell = np.where(first, pr.officer_cell[owner_seq], prev_cell)
    prev_stay = np.zeros((P, n))
    prev_stay[:, 1:] = pr.node_stay[node_seq[:, :-1]]
    leg = pr.travel[prev_cell, cur_cell] + np.where(first, 0.0, prev_stay)
    cs = np.cumsum(leg, axis=1)
    base = np.maximum.accumulate(np.where(first, cs - leg, -np.inf), axis=1)
    arrival = pr.officer_ready[owner_seq] + cs - base
    return Decoded(node_seq, owner_seq, arrival, first, order)


def node_values(problem: PlanningProblem, node_seq: np.ndarray, arrival: np.ndarray) -> np.ndarray:
    """Benefit times arrival-dependent multiplier for each routed node."""
    feasible = arrival + problem.node_stay[node_seq] <= problem.shift_end
    pr = np.ones_like(arrival)
    em = problem.is_emergency[node_seq]
    if em.any():
        delay = np.maximum(arrival[em] - problem.node_call_time[node_seq][em], 0.0)
        band = np.where(delay < 15, 0, np.where(delay <= 30, 1, np.where(delay < 60, 2, 3)))
        pr[em] = ARRIVAL_TABLE[band, problem.node_priority[node_seq][em] - 1]
    return problem.node_benefit[node_seq] * pr * feasible


def fitness_batch(layout: Layout, keys: np.ndarray, with_owner: bool = False):
    """Fitness of every chromosome; optionally also its node -> officer index array."""
    dec = decode_batch(layout, keys)
    if layout.n == 0:
        fit = np.zeros(len(dec.node_seq))
    else:
        fit = node_values(layout.problem, dec.node_seq, dec.arrival).sum(axis=1)
    return (fit, dec.owner_by_node()) if with_owner else fit


# ---------------------------------------------------------------- encoders

def _uniform_in(rng, lo, hi, size):
    # uniform on (lo, hi]
    return lo + (hi - lo) * (1.0 - rng.random(size))


def block_keys(layout: Layout, owner: np.ndarray, node_rank: np.ndarray, officer_rank: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
    """Keys realising a given node->officer allotment.

    Within each band the officers are laid out by ``officer_rank`` [P, nb, m]
    (0 first); each officer entry is immediately followed by its nodes ordered
    by ascending ``node_rank``.  Fresh uniform keys are drawn in the band and
    handed out in that order, so each officer key exceeds all of its nodes'
    keys and the block decodes back to exactly ``owner``.
    """
    P = owner.shape[0]
    K, n_off, m = layout.K, layout.n_off, layout.m
    # major key: band, then officer rank, then officer entry before its nodes
    major = np.empty((P, K), dtype=np.int64)
    major[:, :n_off] = (layout.ent_band[:n_off] * m + officer_rank.reshape(P, n_off)) * 2
    major[:, n_off:] = (layout.node_band * m + officer_rank[np.arange(P)[:, None], layout.node_band, owner]) * 2 + 1
    within = np.zeros((P, K))
    within[:, n_off:] = node_rank
    # lexsort is stable, so remaining ties keep entity order
    order = np.lexsort((within, major), axis=-1)
    # sorted positions are grouped by band; draw each band's keys and sort
    # them descending so they are handed out in layout order
    sorted_u = np.empty((P, K))
    for b, (lo, hi) in enumerate(layout.bands):
        s, e = layout.band_start[b], layout.band_end[b]
        sorted_u[:, s:e] = -np.sort(-_uniform_in(rng, lo, hi, (P, e - s)), axis=1)
    keys = np.empty((P, K))
    keys[np.arange(P)[:, None], order] = sorted_u
    return keys


def lerk_batch(layout: Layout, size: int, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform keys in each entity's band."""
    return _uniform_in(rng, layout.lo, layout.hi, (size, layout.K))


def glerk_batch(layout: Layout, size: int, rng: np.random.Generator) -> np.ndarray:
    """Guided keys: every officer heads a block of nodes in each band.

    Nodes of a band are dealt to officers so that each officer receives one
    before any receives a second (when there are enough nodes); the rest are
    allotted uniformly at random.
    """
    m, n = layout.m, layout.n
    owner = np.zeros((size, n), dtype=int)
    for b in range(layout.nb):
        idx = np.flatnonzero(layout.node_band == b)
        k = len(idx)
        if k == 0:
            continue
        deal = np.argsort(rng.random((size, k)), axis=1)
        officer_perm = np.argsort(rng.random((size, m)), axis=1)
        extra = rng.integers(0, m, size=(size, k))
        slot_owner = np.where(np.arange(k) < m, officer_perm[:, np.minimum(np.arange(k), m - 1)], extra)
        owner[np.arange(size)[:, None], idx[deal]] = slot_owner
    node_rank = rng.random((size, n))
    officer_rank = np.argsort(np.argsort(rng.random((size, layout.nb, m)), axis=2), axis=2)
    return block_keys(layout, owner, node_rank, officer_rank, rng)


def local_optimize_batch(layout: Layout, keys: np.ndarray, probability: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Per chromosome, with ``probability``: move each sub-tour's top-benefit node to the front.

    Works per officer and band: the highest-benefit node swaps keys with the
    current first node of that run, which keeps every key inside its band.
    """
    keys = np.array(keys, dtype=float, copy=True)
    if layout.n == 0 or probability <= 0:
        return keys
    rows = np.flatnonzero(rng.random(len(keys)) < probability)
    if len(rows) == 0:
        return keys
    dec = decode_batch(layout, keys[rows])
    R, n = dec.node_seq.shape
    seg = dec.owner_seq * layout.nb + layout.node_band[dec.node_seq]
    seg_flat = (np.arange(R)[:, None] * (layout.m * layout.nb) + seg).ravel()
    b_flat = layout.problem.node_benefit[dec.node_seq].ravel()
    starts = np.flatnonzero(np.r_[True, seg_flat[1:] != seg_flat[:-1]])
    lengths = np.diff(np.r_[starts, len(seg_flat)])
    seg_max = np.maximum.reduceat(b_flat, starts)
    is_max = b_flat == np.repeat(seg_max, lengths)
    best = np.minimum.reduceat(np.where(is_max, np.arange(len(b_flat)), len(b_flat)), starts)
    move = best != starts
    a, b = starts[move], best[move]
    row = rows[a // n]
    na = dec.node_seq.ravel()[a] + layout.n_off
    nb_ = dec.node_seq.ravel()[b] + layout.n_off
    ka, kb = keys[row, na].copy(), keys[row, nb_].copy()
    keys[row, na], keys[row, nb_] = kb, ka
    return keys


# ---------------------------------------------------------------- single-chromosome API

@dataclass(frozen=True)
class Visit:
    node: int
    arrival: float
    departure: float


@dataclass(frozen=True)
class RoutePlan:
    routes: dict = field(default_factory=dict)  # officer id -> tuple[Visit, ...]

    def node_ids(self, officer) -> list[int]:
        return [v.node for v in self.routes[officer]]

    def assignment(self) -> dict[int, int]:
        return {v.node: o for o, r in self.routes.items() for v in r}

    def first_nodes(self) -> dict[int, int]:
        return {o: r[0].node for o, r in self.routes.items() if r}


@dataclass(frozen=True, eq=False)
class Chromosome:
    keys: np.ndarray
    layout: Layout

    def __post_init__(self):
        k = np.array(self.keys, dtype=float)
        k.setflags(write=False)
        object.__setattr__(self, "keys", k)

    @classmethod
    def from_entries(cls, problem: PlanningProblem, entries, guided: bool = False) -> "Chromosome":
        """Build from ``(kind, index, key)`` triples; kind is ``"officer"`` / ``"officer_cold"`` / ``"node"``."""
        layout = Layout(problem, guided)
        keys = np.full(layout.K, np.nan)
        for kind, idx, key in entries:
            pos = {"officer": idx, "officer_cold": layout.m + idx, "node": layout.n_off + idx}[kind]
            keys[pos] = key
        if np.isnan(keys).any():
            raise ValueError("every officer and node entry needs a key")
        return cls(keys, layout)

    def entries(self) -> list[tuple[str, int, float]]:
        """``(kind, id, key)`` in decode order."""
        dec = decode_batch(self.layout, self.keys)
        pr = self.layout.problem
        out = []
        for e in dec.order[0]:
            if self.layout.ent_is_off[e]:
                out.append(("officer", int(pr.officer_ids[self.layout.ent_officer[e]]), float(self.keys[e])))
            else:
                out.append(("node", int(pr.node_cell[e - self.layout.n_off]), float(self.keys[e])))
        return out

    def with_keys(self, keys) -> "Chromosome":
        return Chromosome(keys, self.layout)


def encode_lerk(problem: PlanningProblem, rng: np.random.Generator) -> Chromosome:
    layout = Layout(problem, guided=False)
    return Chromosome(lerk_batch(layout, 1, rng)[0], layout)


def encode_glerk(problem: PlanningProblem, rng: np.random.Generator) -> Chromosome:
    layout = Layout(problem, guided=True)
    return Chromosome(glerk_batch(layout, 1, rng)[0], layout)


def decode(chrom: Chromosome) -> RoutePlan:
    layout = chrom.layout
    pr = layout.problem
    dec = decode_batch(layout, chrom.keys)
    routes = {int(o): [] for o in pr.officer_ids}
    for j, o, t in zip(dec.node_seq[0], dec.owner_seq[0], dec.arrival[0]):
        routes[int(pr.officer_ids[o])].append(Visit(int(pr.node_cell[j]), float(t), float(t + pr.node_stay[j])))
    return RoutePlan({o: tuple(v) for o, v in routes.items()})


def first_visits(chrom: Chromosome) -> RoutePlan:
    """Like :func:`decode` but keeps only each officer's first visit."""
    pr = chrom.layout.problem
    dec = decode_batch(chrom.layout, chrom.keys)
    routes = {int(o): () for o in pr.officer_ids}
    for i in np.flatnonzero(dec.first[0]):
        j, t = dec.node_seq[0, i], dec.arrival[0, i]
        routes[int(pr.officer_ids[dec.owner_seq[0, i]])] = (
            Visit(int(pr.node_cell[j]), float(t), float(t + pr.node_stay[j])),)
    return RoutePlan(routes)


def local_optimize(chrom: Chromosome, probability: float, rng: np.random.Generator) -> Chromosome:
    return chrom.with_keys(local_optimize_batch(chrom.layout, chrom.keys[None, :], probability, rng)[0])

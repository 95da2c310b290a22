"""Plan fitness and the GA, Cuckoo Search and greedy planners."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .encoding import (
    Chromosome, Layout, PlanningProblem, RoutePlan, Visit, block_keys, decode, decode_batch, first_visits,
    fitness_batch, glerk_batch, lerk_batch, local_optimize_batch, node_values,
)


@dataclass(frozen=True)
class OptimizerParams:
    population_size: int = 100
    max_iterations: int = 300
    elitist_rate: float = 0.2
    cross_rate: float = 0.3
    mutate_rate: float = 0.2
    p_a: float = 0.3
    p_c: float = 0.6
    alpha: float = 0.05
    levy_lambda: float = 1.0
    pre_fly: float = 0.3
    local_opt_probability: float = 0.5

    def __post_init__(self):
        rates = ("elitist_rate", "cross_rate", "mutate_rate", "p_a", "p_c", "pre_fly", "local_opt_probability")
        for r in rates:
            if not 0.0 <= getattr(self, r) <= 1.0:
                raise ValueError(f"{r} must lie in [0, 1]")
        if self.elitist_rate + self.cross_rate + self.mutate_rate > 1.0 + 1e-12:
            raise ValueError("elitist_rate + cross_rate + mutate_rate must not exceed 1")
        if self.population_size < 1 or self.max_iterations < 0:
            raise ValueError("population_size must be >= 1 and max_iterations >= 0")
        if self.alpha < 0 or not 0 < self.levy_lambda <= 2:
            raise ValueError("alpha must be >= 0 and levy_lambda in (0, 2]")


@dataclass(frozen=True)
class FitnessScore:
    value: float
    per_officer: dict = field(default_factory=dict)
    reachable: int = 0


def fitness(plan: RoutePlan, problem: PlanningProblem) -> FitnessScore:
    """Sum over sub-routes of node benefit times its arrival-time multiplier."""
    index = {int(c): j for j, c in enumerate(problem.node_cell)}
    per_officer, reachable = {}, 0
    for officer, visits in plan.routes.items():
        if not visits:
            per_officer[officer] = 0.0
            continue
        idx = np.array([index[v.node] for v in visits])
        arr = np.array([v.arrival for v in visits])
        vals = node_values(problem, idx[None, :], arr[None, :])[0]
        per_officer[officer] = float(vals.sum())
        reachable += int((vals > 0).sum())
    return FitnessScore(float(sum(per_officer.values())), per_officer, reachable)


def net_objective(fitness_total: float, n_officers: int, rho: float) -> float:
    """Total reward minus the officers' salary cost."""
    if rho < 0:
        raise ValueError("salary must be non-negative")
    return fitness_total - n_officers * rho


# ---------------------------------------------------------------- operators

def crossover_batch(layout: Layout, moms: np.ndarray, dads: np.ndarray, rng: np.random.Generator,
                    mom_owner: np.ndarray | None = None, dad_owner: np.ndarray | None = None) -> np.ndarray:
    """Uniform crossover on nodes: each node keeps its officer and key from one parent.

    ``*_owner`` are the parents' decoded node -> officer arrays when already known.
    """
    C = len(moms)
    if layout.n == 0:
        return np.array(moms, copy=True)
    if mom_owner is None or dad_owner is None:
        both = decode_batch(layout, np.concatenate([moms, dads])).owner_by_node()
        mom_owner, dad_owner = both[:C], both[C:]
    from_mom = rng.random((C, layout.n)) < 0.5
    owner = np.where(from_mom, mom_owner, dad_owner)
    node_key = np.where(from_mom, moms[:, layout.n_off:], dads[:, layout.n_off:])
    off_keys = moms[:, :layout.n_off].reshape(C, layout.nb, layout.m)
    officer_rank = np.argsort(np.argsort(-off_keys, axis=2, kind="stable"), axis=2)
    return block_keys(layout, owner, -node_key, officer_rank, rng)


def crossover(mom: Chromosome, dad: Chromosome, rng: np.random.Generator) -> Chromosome:
    if mom.layout is not dad.layout and not (
            mom.layout.problem is dad.layout.problem and mom.layout.guided == dad.layout.guided):
        raise ValueError("parents must encode the same officers and nodes")
    return mom.with_keys(crossover_batch(mom.layout, mom.keys[None], dad.keys[None], rng)[0])


def mantegna_sigma(beta: float) -> float:
    num = math.gamma(1 + beta) * math.sin(math.pi * beta / 2)
    den = math.gamma((1 + beta) / 2) * beta * 2 ** ((beta - 1) / 2)
    return (num / den) ** (1 / beta)


def levy_step(rng: np.random.Generator, levy_lambda: float = 1.0, alpha: float = 0.05, size=None):
    """Scaled heavy-tailed step, Mantegna's algorithm with stability index ``levy_lambda``."""
    u = rng.normal(0.0, mantegna_sigma(levy_lambda), size)
    v = rng.normal(0.0, 1.0, size)
    return alpha * u / np.abs(v) ** (1 / levy_lambda)


def levy_perturb_batch(layout: Layout, keys: np.ndarray, rng, levy_lambda=1.0, alpha=0.05) -> np.ndarray:
    out = np.array(keys, dtype=float, copy=True)
    n_off = layout.n_off
    out[:, n_off:] += levy_step(rng, levy_lambda, alpha, size=(len(out), layout.n))
    out[:, n_off:] = layout.clamp(out)[:, n_off:]
    return out


# ---------------------------------------------------------------- metaheuristics

@dataclass
class OptimizeResult:
    best: Chromosome
    fitness: float
    history: np.ndarray  # best fitness at start and after every iteration


def _initial(layout, size, rng):
    return glerk_batch(layout, size, rng) if layout.guided else lerk_batch(layout, size, rng)


def _start(layout, P, rng, initial):
    if initial is None:
        return _initial(layout, P, rng)
    pop = np.array(initial, dtype=float, copy=True)
    if pop.shape != (P, layout.K) or not layout.in_band(pop).all():
        raise ValueError(f"initial population must be {P} x {layout.K} keys inside their bands")
    return pop


def _finish(layout, pop, fit, history):
    i = int(np.argmax(fit))
    return OptimizeResult(Chromosome(pop[i], layout), float(fit[i]), np.array(history))


def ga_optimize(problem: PlanningProblem, params: OptimizerParams, rng: np.random.Generator,
                guided: bool = True, initial: np.ndarray | None = None) -> OptimizeResult:
    """Elitism + uniform crossover with local optimisation + immigration of fresh draws.

    ``initial`` optionally replaces the random starting population.
    """
    layout = Layout(problem, guided)
    P = params.population_size
    n_elite = min(P, round(params.elitist_rate * P))
    n_cross = min(P - n_elite, round(params.cross_rate * P))
    n_imm = min(P - n_elite - n_cross, round(params.mutate_rate * P))
    pop = _start(layout, P, rng, initial)
    fit, own = fitness_batch(layout, pop, with_owner=True)
    history = [fit.max()]
    kid_slots = np.arange(n_elite, n_elite + n_cross)
    for _ in range(params.max_iterations):
        rank = np.argsort(-fit, kind="stable")
        pop, fit, own = pop[rank], fit[rank], own[rank]
        kids = np.empty((0, layout.K))
        if n_cross:
            moms = rng.integers(0, P, size=n_cross)
            dads = rng.integers(0, P, size=n_cross)
            kids = crossover_batch(layout, pop[moms], pop[dads], rng, own[moms], own[dads])
            kids = local_optimize_batch(layout, kids, params.local_opt_probability, rng)
        fresh = _initial(layout, n_imm, rng) if n_imm else np.empty((0, layout.K))
        # one evaluation for children and immigrants
        f_new, o_new = fitness_batch(layout, np.concatenate([kids, fresh]), with_owner=True)
        pop[kid_slots], fit[kid_slots], own[kid_slots] = kids, f_new[:n_cross], o_new[:n_cross]
        if n_imm:
            worst = np.argsort(-fit, kind="stable")[P - n_imm:]
            pop[worst], fit[worst], own[worst] = fresh, f_new[n_cross:], o_new[n_cross:]
        history.append(fit.max())
    return _finish(layout, pop, fit, history)


def cs_optimize(problem: PlanningProblem, params: OptimizerParams, rng: np.random.Generator,
                guided: bool = True, initial: np.ndarray | None = None) -> OptimizeResult:
    """Cuckoo Search: Levy moves from top nests, strict-improvement replacement, abandonment.

    ``initial`` optionally replaces the random starting nests.
    """
    layout = Layout(problem, guided)
    P = params.population_size
    n_fly = round(params.pre_fly * P)
    n_top = max(1, round(params.p_c * P))
    n_drop = min(P - 1, round(params.p_a * P))
    pop = _start(layout, P, rng, initial)
    fit = fitness_batch(layout, pop)
    rank = np.argsort(-fit, kind="stable")
    pop, fit = pop[rank], fit[rank]
    history = [fit[0]]
    for _ in range(params.max_iterations):
        cand = np.empty((0, layout.K))
        rivals = np.empty(0, dtype=int)
        if n_fly:
            src = rng.integers(0, n_top, size=n_fly)
            cand = levy_perturb_batch(layout, pop[src], rng, params.levy_lambda, params.alpha)
            cand = local_optimize_batch(layout, cand, params.local_opt_probability, rng)
            rivals = rng.integers(0, P, size=n_fly)
        fresh = _initial(layout, n_drop, rng) if n_drop else np.empty((0, layout.K))
        # one evaluation for cuckoos and replacement nests
        f_new = fitness_batch(layout, np.concatenate([cand, fresh]))
        fc = f_new[:n_fly]
        for j, k in enumerate(rivals):
            if fc[j] > fit[k]:
                pop[k], fit[k] = cand[j], fc[j]
        if n_drop:
            worst = np.argsort(-fit, kind="stable")[P - n_drop:]
            pop[worst], fit[worst] = fresh, f_new[n_fly:]
        rank = np.argsort(-fit, kind="stable")
        pop, fit = pop[rank], fit[rank]
        history.append(fit[0])
    return _finish(layout, pop, fit, history)


# ---------------------------------------------------------------- greedy

def _greedy_node_order(problem: PlanningProblem) -> np.ndarray:
    """Descending benefit; ties go to the node closest to any officer, then lower index."""
    near = problem.travel[np.ix_(problem.officer_cell, problem.node_cell)].min(axis=0) if problem.n_nodes else []
    return np.lexsort((np.arange(problem.n_nodes), near, -problem.node_benefit))


def _plan_from_queues(problem, queues) -> RoutePlan:
    return RoutePlan({int(problem.officer_ids[o]): tuple(q) for o, q in enumerate(queues)})


def imp_greedy(problem: PlanningProblem, stop_when_all_busy: bool = False) -> RoutePlan:
    """Assign each node (highest benefit first) to the officer with the best benefit x multiplier.

    Ties go to the earliest projected arrival, then the lowest officer id.
    Officers' projected position and time advance as nodes queue onto them.
    """
    m = problem.n_officers
    queues = [[] for _ in range(m)]
    if m == 0:
        return RoutePlan({})
    pos = problem.officer_cell.copy()
    ready = problem.officer_ready.copy()
    ids = problem.officer_ids
    busy = 0
    for j in _greedy_node_order(problem):
        cell = problem.node_cell[j]
        arrival = ready + problem.travel[pos, cell]
        value = node_values(problem, np.full((1, m), j), arrival[None, :])[0]
        o = np.lexsort((ids, arrival, -value))[0]
        if not queues[o]:
            busy += 1
        queues[o].append(Visit(int(cell), float(arrival[o]), float(arrival[o] + problem.node_stay[j])))
        pos[o] = cell
        ready[o] = arrival[o] + problem.node_stay[j]
        if stop_when_all_busy and busy == m:
            break
    return _plan_from_queues(problem, queues)


def dis_greedy(problem: PlanningProblem, stop_when_all_busy: bool = False) -> RoutePlan:
    """Assign each node to the officer nearest to it (by projected position).

    Nodes are taken nearest-first relative to the officers' current positions;
    ties go to the lower officer id.
    """
    m = problem.n_officers
    queues = [[] for _ in range(m)]
    if m == 0:
        return RoutePlan({})
    pos = problem.officer_cell.copy()
    ready = problem.officer_ready.copy()
    ids = problem.officer_ids
    near = problem.travel[np.ix_(pos, problem.node_cell)].min(axis=0) if problem.n_nodes else []
    busy = 0
    for j in np.lexsort((np.arange(problem.n_nodes), near)):
        cell = problem.node_cell[j]
        dist = problem.travel[pos, cell]
        o = np.lexsort((ids, dist))[0]
        if not queues[o]:
            busy += 1
        arrival = ready[o] + dist[o]
        queues[o].append(Visit(int(cell), float(arrival), float(arrival + problem.node_stay[j])))
        pos[o] = cell
        ready[o] = arrival + problem.node_stay[j]
        if stop_when_all_busy and busy == m:
            break
    return _plan_from_queues(problem, queues)


# ---------------------------------------------------------------- registry

PLANNERS = ("glerk-ga", "glerk-cs", "lerk-ga", "lerk-cs", "imp-greedy", "dis-greedy")


def plan(name: str, problem: PlanningProblem, params: OptimizerParams, rng: np.random.Generator,
         committed_only: bool = False) -> RoutePlan:
    """Run planner ``name``.

    With ``committed_only`` the result only needs each officer's first visit:
    greedy planners stop once every officer has a node and metaheuristic plans
    are truncated to their first visits.
    """
    if problem.n_officers == 0:
        return RoutePlan({})
    if name == "imp-greedy":
        return imp_greedy(problem, committed_only)
    if name == "dis-greedy":
        return dis_greedy(problem, committed_only)
    if name not in PLANNERS:
        raise ValueError(f"unknown planner {name!r}; choose from {', '.join(PLANNERS)}")
    guided = name.startswith("glerk")
    run = ga_optimize if name.endswith("-ga") else cs_optimize
    best = run(problem, params, rng, guided).best
    return first_visits(best) if committed_only else decode(best)

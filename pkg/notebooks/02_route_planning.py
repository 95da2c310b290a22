# %% [markdown]
# # Planning routes for a handful of officers
#
# One planning instant: three idle officers, a few hotspots and coldspots and
# two pending emergency calls.  Cells sit on a 6 x 6 block, 5 minutes' walk
# apart, and the shift ends in two hours.  We encode plans as random keys, decode them into routes and let the
# four planners compete on the same fitness.

# %%
import numpy as np

from patrolplan.domain import NodeState, benefit_value
from patrolplan.encoding import Layout, PlanningProblem, decode, encode_glerk, encode_lerk
from patrolplan.optimize import OptimizerParams, cs_optimize, dis_greedy, fitness, ga_optimize, imp_greedy

side = 6
xy = np.array([(i % side, i // side) for i in range(side * side)], dtype=float)
travel = 5.0 * np.abs(xy[:, None] - xy[None]).sum(axis=2)

gen = np.random.default_rng(7)
node_cell = np.sort(gen.choice(side * side, 18, replace=False))
state = np.zeros(18, dtype=int)
state[gen.choice(18, 6, replace=False)] = NodeState.HOTSPOT
state[[2, 11]] = NodeState.EMERGENCY
prio = np.where(state == NodeState.EMERGENCY, 0, 1)
prio[[2, 11]] = [5, 2]
w = gen.uniform(0, 0.8, 18)
lam = np.array([0.0, 2.0, 4.0])[state]

problem = PlanningProblem(
    travel=travel, officer_cell=[0, 17, 33], officer_ready=600.0, node_cell=node_cell, node_state=state,
    node_benefit=benefit_value(w, prio, lam), shift_end=720.0, node_priority=prio,
    node_call_time=np.where(state == NodeState.EMERGENCY, 598.0, np.nan), officer_ids=[11, 12, 13])
print("emergencies at cells", node_cell[[2, 11]], "hotspots at", node_cell[state == NodeState.HOTSPOT])
print("node benefits:", problem.node_benefit.round(1))

# %% [markdown]
# A guided draw puts hotspots and emergencies in the upper key band, so every
# officer's route opens with one of them.  A plain draw mixes everything.

# %%
rng = np.random.default_rng(0)
for name, enc in (("LERK", encode_lerk), ("G-LERK", encode_glerk)):
    plan = decode(enc(problem, rng))
    print(f"{name:>6}:", {o: plan.node_ids(o) for o in plan.routes}, f"fitness {fitness(plan, problem).value:.1f}")

# %% [markdown]
# The first emergency is priority 5, so it only pays if reached within 15
# minutes of the call.  The metaheuristics search the key space; the
# greedy planners build routes directly.

# %%
params = OptimizerParams(population_size=10, max_iterations=40)
results = {
    "G-LERK-GA": ga_optimize(problem, params, np.random.default_rng(1)),
    "G-LERK-CS": cs_optimize(problem, params, np.random.default_rng(1)),
    "LERK-GA": ga_optimize(problem, params, np.random.default_rng(1), guided=False),
}
for name, r in results.items():
    print(f"{name:>10}: fitness {r.fitness:7.1f} (best of first generation {r.history[0]:.1f})")
for name, fn in (("Imp-Greedy", imp_greedy), ("Dis-Greedy", dis_greedy)):
    print(f"{name:>10}: fitness {fitness(fn(problem), problem).value:7.1f}")

# %% [markdown]
# Routes of the best guided GA plan, with arrival minutes.

# %%
best = decode(results["G-LERK-GA"].best)
for o, route in best.routes.items():
    print(o, [(v.node, v.arrival) for v in route])
print("key layout:", Layout(problem, guided=True).K, "keys for", problem.n_officers, "officers and",
      problem.n_nodes, "nodes")

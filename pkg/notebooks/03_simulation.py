# %% [markdown]
# # A working day on the street
#
# We predict hotspots for two synthetic test days, then let teams of
# different sizes patrol them minute by minute.  Calls arrive during the
# shift; each planner decides who goes where whenever something changes.

# %%
from collections import Counter

import numpy as np

from patrolplan.evaluation import crime_events, duty_crimes, efficiency, robustness
from patrolplan.ingest import SyntheticParams, generate_synthetic
from patrolplan.optimize import OptimizerParams
from patrolplan.predict import ForestParams, fit_predict
from patrolplan.sim import SimConfig, run

scenario = generate_synthetic(SyntheticParams(n_days=23, call_rate=30), seed=5)
pred = fit_predict(scenario, train_days=range(7, 21), test_days=range(21, 23),
                   params=ForestParams(n_trees=20, max_depth=8), seed=0)
print(f"forest accuracy on the test days: {pred.metrics['accuracy']:.3f}")

# %% [markdown]
# The event log records every dispatch, arrival and call.  Here is the start
# of one G-LERK-CS day with five officers.

# %%
config = SimConfig(optimizer=OptimizerParams(population_size=10, max_iterations=2))
log = run(scenario, pred.hotspots, "glerk-cs", 5, seed=1, config=config, days=[21])
for e in log.events[:8]:
    print(f"{e.time % 1440 / 60:5.2f}h  officer {e.officer_id:>2}  {e.event:<14} node {e.node_id}")
print(Counter(e.event for e in log.events))

# %% [markdown]
# Efficiency asks how many duty-hour crimes had an officer nearby within an
# hour either side.  Robustness sums the arrival credit of attended calls.

# %%
crimes = crime_events(scenario)
day = crimes[(crimes[:, 1] >= 21 * 1440) & (crimes[:, 1] < 22 * 1440)]
day = duty_crimes(day, config.shift_start, config.shift_end)
print(f"efficiency {efficiency(log, day):.3f}, robustness {robustness(log):.2f}")

# %% [markdown]
# Bigger teams cover more crimes and reach calls sooner.  Greedy planners
# are deterministic, so one run each is enough.

# %%
for planner in ("imp-greedy", "dis-greedy", "glerk-cs"):
    for n in (3, 6, 12):
        log = run(scenario, pred.hotspots, planner, n, seed=1, config=config, days=[21])
        print(f"{planner:>10} n={n:<2} efficiency {efficiency(log, day):.3f}  robustness {robustness(log):6.2f}")

# %% [markdown]
# For full sweeps over planners, team sizes and repeated runs use the command
# line: `patrolplan benchmark --config configs/trend.json --jobs 8 --out out/`.

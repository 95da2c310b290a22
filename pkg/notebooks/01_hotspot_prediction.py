# %% [markdown]
# # Predicting hotspots
#
# A synthetic sector of 2 x 47 cells, four weeks of crimes, check-ins and
# venues.  We build the per (node, 2-hour slot) features, train the forest on
# two weeks and label the following week.

# %%
import numpy as np

from patrolplan.features import build_features, feature_names
from patrolplan.ingest import SyntheticParams, generate_synthetic, ground_truth_hotspots
from patrolplan.predict import ForestParams, fit_predict

params = SyntheticParams(n_days=28)
scenario = generate_synthetic(params, seed=3)
print(scenario.grid.n_cells, "cells,", len(scenario.crimes), "crimes,", len(scenario.checkins), "check-ins")

# %% [markdown]
# Each row describes one cell in one slot.  The first two columns are crime
# densities over the last 30 and 7 days, then POI mix, then mobility.

# %%
fs = build_features(scenario, days=range(14, 15))
print(fs.X.shape)
print(feature_names(sorted({p.category for p in scenario.pois}))[:6], "...")
print("share of labelled hotspots:", fs.y.mean().round(3))

# %% [markdown]
# Training balances the classes by undersampling coldspots, so the forest
# sees as many hotspot rows as coldspot rows.

# %%
pred = fit_predict(scenario, train_days=range(7, 21), test_days=range(21, 28),
                   params=ForestParams(n_trees=30, max_depth=8), seed=0)
for k in ("accuracy", "precision", "recall", "f1"):
    print(f"{k:>9}: {pred.metrics[k]:.3f}")

# %% [markdown]
# The forest is judged on crimes, which are noisy.  Against the generator's
# persistent hot cells the map is much cleaner.

# %%
truth = ground_truth_hotspots(params, seed=3)
agree = (pred.hotspots.hot == truth[None, None, :]).mean()
print(f"map agrees with the true hot cells on {agree:.1%} of (day, slot, cell)")
print("predicted hot cells on day 21, 10:00-12:00:", np.flatnonzero(pred.hotspots.hot_nodes(21, 5)))

"""Crime-aware patrol route planning for multiple officers.

Pipeline: ``ingest`` (CSV records, grid binning, synthetic scenarios) ->
``features`` -> ``predict`` (hotspot forest) -> ``optimize`` (G-LERK GA / CS,
greedy planners) -> ``sim`` (minute-step patrol simulation) -> ``evaluation``
(efficiency, robustness, sweeps).
"""

from .domain import (
    ConfigError, EmergencyCall, GridMap, LatLon, NodeState, Officer, OfficerStatus, PatrolNode, TimeInterval,
    arrival_multiplier, benefit, haversine_m, priority_of, travel_time,
)
from .encoding import Chromosome, PlanningProblem, RoutePlan, Visit, decode, encode_glerk, encode_lerk, local_optimize
from .evaluation import MetricReport, aggregate, efficiency, robustness, sub_seed, sweep
from .features import FeatureRow, FeatureSet, build_features, undersample
from .ingest import Scenario, SyntheticParams, bin, build_grid, generate_synthetic, load_scenario
from .optimize import (
    PLANNERS, FitnessScore, OptimizerParams, crossover, cs_optimize, dis_greedy, fitness, ga_optimize, imp_greedy,
    levy_step, net_objective, plan,
)
from .predict import ForestParams, HotspotMap, TreeEnsemble, fit_predict, predict_hotspots, train
from .sim import EventLog, SimConfig, run

__version__ = "0.1.0"

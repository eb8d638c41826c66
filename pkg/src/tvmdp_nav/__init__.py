"""Reachable-space planning for a robot among uncontrollable agents in a
time-varying disturbance field."""

from .baselines import ersi, evaluate_policy, fhvi, pi_reachable, plan
from .disturbance import DisturbanceField, NoiseModel
from .dynamics import AgentState, Dynamics, SfmParams, sfm_control, step_robot
from .gaussian_filter import GaussianBelief, UTParams, predict_chain, ut_predict
from .planner import PlannerConfig, PlanningProblem, RewardModel, TimedPolicy, policy_search
from .reachable import chi2_quantile, reachable_states
from .scenario import Scenario, ScenarioError, load_scenario
from .sim import EpisodeResult, emergency_stop_check, metrics_campaign, run_episode, timing_benchmark
from .spaces import Grid, cell_center, discretize_state

__version__ = "0.1.0"

__all__ = [
    "AgentState", "DisturbanceField", "Dynamics", "EpisodeResult", "GaussianBelief", "Grid", "NoiseModel",
    "PlannerConfig", "PlanningProblem", "RewardModel", "Scenario", "ScenarioError", "SfmParams",
    "TimedPolicy", "UTParams", "cell_center", "chi2_quantile", "discretize_state", "emergency_stop_check",
    "ersi", "evaluate_policy", "fhvi", "load_scenario", "metrics_campaign", "pi_reachable", "plan",
    "policy_search", "predict_chain", "reachable_states", "run_episode", "sfm_control", "step_robot",
    "timing_benchmark", "ut_predict",
]

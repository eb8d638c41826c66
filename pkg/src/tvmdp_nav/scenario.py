"""Scenario description and its YAML configuration format.

Every key carries its unit in the name. Unknown keys are rejected and
omitted optional keys take the defaults in ``DEFAULTS``; see the README
for the full schema.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .disturbance import DisturbanceField, GyreParams, NoiseModel, VortexParams
from .dynamics import SfmParams
from .gaussian_filter import UTParams
from .planner import PlannerConfig
from .spaces import Box, Grid

SCHEMA_VERSION = 1
REQUIRED = object()

_SFM_DEFAULTS = {
    "goal_gain_per_s": 1.0,
    "desired_speed_mps": 1.5,
    "repulsion_strength_mps2": 2.0,
    "repulsion_range_m": 2.0,
    "obstacle_strength_mps2": 3.0,
    "obstacle_range_m": 1.5,
    "max_speed_mps": 2.0,
}

DEFAULTS = {
    "version": SCHEMA_VERSION,
    "name": "unnamed",
    "seed": 0,
    "grid": {
        "origin_m": [0.0, 0.0],
        "extent_m": REQUIRED,
        "cell_size_m": REQUIRED,
        "action_levels_per_dim": 3,
        "action_bound_mps": 2.5,
    },
    "obstacles_m": [],
    "robot": {"start_m": REQUIRED, "goal_cell": REQUIRED},
    "agents": {
        "count": 0,
        "spawn_radius_m": 8.0,
        "min_spawn_distance_m": 2.0,
        "explicit": [],
    },
    "disturbance": {
        "kind": "none",
        "gyre": {"strength_A": 0.5, "size_m": 15.0},
        "vortex": {"radius_m": 5.0, "omega_radps": 0.1, "center_m": [15.0, 15.0]},
    },
    "noise": {"covariance_m2": [[1.0, 0.0], [0.0, 1.0]]},
    "sfm_true": dict(_SFM_DEFAULTS),
    "sfm_belief": dict(_SFM_DEFAULTS),
    "planner": {
        "kind": "ours",
        "horizon_steps": 4,
        "dt_s": 0.5,
        "confidence": 0.95,
        "discount": 0.95,
        "max_iterations": 5,
        "time_budget_s": 0.8,
        "ersi_max_sequences": 600000,
        "ut_alpha": 1.0,
        "ut_beta": 2.0,
        "ut_kappa": None,
        "missing_value": "heuristic",
    },
    "reward": {
        "collision_penalty": -100.0,
        "eta": 1.0,
        "goal_distance_weight_per_m": 1.0,
        "goal_bonus": 100.0,
        "obstacle_penalty": -100.0,
    },
    "sim": {
        "t0_s": 0.0,
        "step_cap": 400,
        "collision_radius_m": None,
        "agent_goal_tolerance_m": 1.0,
        "record_timing": False,
    },
}

_AGENT_KEYS = {"start_m", "goal_m"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AgentSpec:
    start: tuple[float, float]
    goal: tuple[float, float]


@dataclass(frozen=True)
class RewardParams:
    collision_penalty: float = -100.0
    eta: float = 1.0
    goal_weight: float = 1.0
    goal_bonus: float = 100.0
    obstacle_penalty: float = -100.0


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    grid: Grid
    obstacles: tuple
    robot_start: np.ndarray
    goal_cell: tuple[int, int]
    field: DisturbanceField
    noise: NoiseModel
    sfm_true: SfmParams
    sfm_belief: SfmParams
    planner: PlannerConfig
    planner_kind: str = "ours"
    reward: RewardParams = RewardParams()
    agents: tuple = ()
    agent_count: int = 0
    spawn_radius: float = 8.0
    min_spawn_distance: float = 2.0
    step_cap: int = 400
    collision_radius: float | None = None
    agent_goal_tolerance: float = 1.0
    t0: float = 0.0
    seed: int = 0
    record_timing: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.agents) if self.agents else self.agent_count

    @property
    def radius(self) -> float:
        return 0.5 * self.grid.cell_size if self.collision_radius is None else self.collision_radius

    def with_overrides(self, overrides: dict) -> "Scenario":
        doc = copy.deepcopy(self.raw)
        for key, value in overrides.items():
            set_dotted(doc, key, value)
        return scenario_from_dict(doc)


def _merge(user, default, path: str):
    if default is REQUIRED:
        return user
    if isinstance(default, dict):
        if not isinstance(user, dict):
            raise ScenarioError(f"{path or 'document'}: expected a mapping, got {type(user).__name__}")
        unknown = sorted(set(user) - set(default))
        if unknown:
            raise ScenarioError(f"unknown key '{_join(path, unknown[0])}'")
        out = {}
        for k, dv in default.items():
            p = _join(path, k)
            if k in user:
                out[k] = _merge(user[k], dv, p)
            elif dv is REQUIRED:
                raise ScenarioError(f"missing required key '{p}'")
            else:
                out[k] = copy.deepcopy(dv)
        return out
    return user


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def set_dotted(doc: dict, key: str, value) -> None:
    parts = key.split(".")
    node = doc
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _vec(value, path: str, n: int = 2) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"'{path}' must be a list of {n} numbers") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"'{path}' must be a list of {n} finite numbers")
    return arr


def _sfm(d: dict, path: str) -> SfmParams:
    try:
        return SfmParams(
            goal_gain=float(d["goal_gain_per_s"]),
            desired_speed=float(d["desired_speed_mps"]),
            repulsion_strength=float(d["repulsion_strength_mps2"]),
            repulsion_range=float(d["repulsion_range_m"]),
            obstacle_strength=float(d["obstacle_strength_mps2"]),
            obstacle_range=float(d["obstacle_range_m"]),
            max_speed=float(d["max_speed_mps"]),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    d = _merge(doc, DEFAULTS, "")
    if d["version"] != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {d['version']} (expected {SCHEMA_VERSION})")

    g = d["grid"]
    try:
        grid = Grid(tuple(_vec(g["origin_m"], "grid.origin_m")), tuple(_vec(g["extent_m"], "grid.extent_m")),
                    float(g["cell_size_m"]), int(g["action_levels_per_dim"]), float(g["action_bound_mps"]))
    except ValueError as exc:
        raise ScenarioError(f"grid: {exc}") from None

    obstacles = []
    for i, box in enumerate(d["obstacles_m"]):
        b = _vec(box, f"obstacles_m[{i}]", 4)
        try:
            obstacles.append(Box(*b))
        except ValueError as exc:
            raise ScenarioError(f"obstacles_m[{i}]: {exc}") from None
    obstacles = tuple(obstacles)

    start = _vec(d["robot"]["start_m"], "robot.start_m")
    goal = tuple(int(v) for v in d["robot"]["goal_cell"])
    if len(goal) != 2 or not grid.contains(goal):
        raise ScenarioError(f"robot.goal_cell {goal} is outside the grid {grid.shape}")
    lo = np.asarray(grid.origin)
    if np.any(start < lo) or np.any(start > lo + np.asarray(grid.extent)):
        raise ScenarioError(f"robot.start_m {start.tolist()} is outside the workspace")
    goal_center = lo + (np.asarray(goal) + 0.5) * grid.cell_size
    for i, box in enumerate(obstacles):
        if box.contains(start):
            raise ScenarioError(f"robot.start_m lies inside obstacle {i}")
        if box.contains(goal_center):
            raise ScenarioError(f"robot.goal_cell lies inside obstacle {i}")

    ag = d["agents"]
    explicit = []
    for i, a in enumerate(ag["explicit"]):
        if not isinstance(a, dict) or set(a) != _AGENT_KEYS:
            raise ScenarioError(f"agents.explicit[{i}] needs exactly the keys {sorted(_AGENT_KEYS)}")
        s = _vec(a["start_m"], f"agents.explicit[{i}].start_m")
        gl = _vec(a["goal_m"], f"agents.explicit[{i}].goal_m")
        explicit.append(AgentSpec(tuple(s), tuple(gl)))
    count = int(ag["count"])
    if count < 0:
        raise ScenarioError("agents.count must be >= 0")

    dist = d["disturbance"]
    try:
        fld = DisturbanceField(
            dist["kind"],
            GyreParams(float(dist["gyre"]["strength_A"]), float(dist["gyre"]["size_m"])),
            VortexParams(float(dist["vortex"]["radius_m"]), float(dist["vortex"]["omega_radps"]),
                         tuple(_vec(dist["vortex"]["center_m"], "disturbance.vortex.center_m"))),
        )
        noise = NoiseModel(np.asarray(d["noise"]["covariance_m2"], dtype=float))
    except ValueError as exc:
        raise ScenarioError(f"disturbance/noise: {exc}") from None

    p = d["planner"]
    from .baselines import PLANNERS
    if p["kind"] not in PLANNERS:
        raise ScenarioError(f"planner.kind must be one of {sorted(PLANNERS)}, got {p['kind']!r}")
    try:
        cfg = PlannerConfig(
            horizon=int(p["horizon_steps"]), dt=float(p["dt_s"]), alpha=float(p["confidence"]),
            gamma=float(p["discount"]), max_iterations=int(p["max_iterations"]),
            time_budget=None if p["time_budget_s"] is None else float(p["time_budget_s"]),
            ersi_max_sequences=int(p["ersi_max_sequences"]),
            ut=UTParams(float(p["ut_alpha"]), float(p["ut_beta"]),
                        None if p["ut_kappa"] is None else float(p["ut_kappa"])),
            missing_value=str(p["missing_value"]),
        )
    except ValueError as exc:
        raise ScenarioError(f"planner: {exc}") from None
    if not 0.0 < cfg.alpha < 1.0:
        raise ScenarioError("planner.confidence must lie in (0, 1)")
    if cfg.dt <= 0:
        raise ScenarioError("planner.dt_s must be positive")

    r = d["reward"]
    reward = RewardParams(float(r["collision_penalty"]), float(r["eta"]),
                          float(r["goal_distance_weight_per_m"]), float(r["goal_bonus"]),
                          float(r["obstacle_penalty"]))
    sim = d["sim"]
    if int(sim["step_cap"]) < 1:
        raise ScenarioError("sim.step_cap must be >= 1")

    return Scenario(
        name=str(d["name"]), grid=grid, obstacles=obstacles, robot_start=start, goal_cell=goal,
        field=fld, noise=noise, sfm_true=_sfm(d["sfm_true"], "sfm_true"),
        sfm_belief=_sfm(d["sfm_belief"], "sfm_belief"), planner=cfg, planner_kind=p["kind"],
        reward=reward, agents=tuple(explicit), agent_count=count,
        spawn_radius=float(ag["spawn_radius_m"]), min_spawn_distance=float(ag["min_spawn_distance_m"]),
        step_cap=int(sim["step_cap"]),
        collision_radius=None if sim["collision_radius_m"] is None else float(sim["collision_radius_m"]),
        agent_goal_tolerance=float(sim["agent_goal_tolerance_m"]), t0=float(sim["t0_s"]),
        seed=int(d["seed"]), record_timing=bool(sim["record_timing"]), raw=doc,
    )


def bundled_scenarios() -> list[str]:
    root = resources.files("tvmdp_nav") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_scenario_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = resources.files("tvmdp_nav") / "scenarios" / f"{name_or_path}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    raise ScenarioError(f"scenario {name_or_path!r} not found (bundled: {', '.join(bundled_scenarios())})")


def parse_scenario_text(text: str, source: str = "<string>") -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ScenarioError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    return {} if doc is None else doc


def load_scenario(name_or_path, overrides: dict | None = None) -> Scenario:
    path = resolve_scenario_path(name_or_path)
    doc = parse_scenario_text(path.read_text(), str(path))
    for key, value in (overrides or {}).items():
        set_dotted(doc, key, value)
    return scenario_from_dict(doc)

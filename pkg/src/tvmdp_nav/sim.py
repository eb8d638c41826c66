"""Closed-loop simulation: receding-horizon replanning among SFM agents,
emergency stops, and the metric and timing studies."""
from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import PAUSED_WORLD, PLANNERS, SearchSpaceTooLarge, plan
from .dynamics import AgentState, Dynamics, sfm_control, step_robot, step_uncontrollable
from .planner import PlanningProblem, RewardModel, predict_other_vehicles
from .scenario import Scenario
from .spaces import discretize_state, obstacle_mask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Robot and agent state at ``time`` and the action executed from it.

    The final record of an episode has no action (``None`` fields).
    """

    step: int
    time: float
    x: float
    y: float
    vx: float | None
    vy: float | None
    estop: int
    plan_wall: float | None
    agents: tuple = ()


@dataclass
class EpisodeResult:
    reached_goal: bool
    distance_traveled: float
    time_to_goal: float
    emergency_stops: int
    stops_agents: int
    stops_obstacles: int
    records: list = field(default_factory=list)
    plan_times: list = field(default_factory=list)
    truncated_plans: int = 0
    planner: str = "ours"
    seed: int = 0


def emergency_stop_check(proposed_next, obstacles, agents, radius: float) -> bool:
    """True iff the proposed position is inside an obstacle or strictly closer
    than ``radius`` to an agent."""
    return stop_reason(proposed_next, obstacles, agents, radius) is not None


def stop_reason(proposed_next, obstacles, agents, radius: float) -> str | None:
    p = np.asarray(proposed_next, dtype=float)
    for box in obstacles:
        if box.contains(p):
            return "obstacle"
    for a in agents:
        pos = a.position if isinstance(a, AgentState) else np.asarray(a, dtype=float)
        if np.hypot(*(p - pos)) < radius:
            return "agent"
    return None


def spawn_agents(scenario: Scenario, rng: np.random.Generator) -> list[AgentState]:
    if scenario.agents:
        return [AgentState(np.array(a.start), np.zeros(2), np.array(a.goal)) for a in scenario.agents]
    agents: list[AgentState] = []
    for _ in range(scenario.agent_count):
        pos = _sample_spawn(scenario, rng, agents)
        agents.append(AgentState(pos, np.zeros(2), _sample_free_point(scenario, rng)))
    return agents


def _in_bounds(scenario: Scenario, p) -> bool:
    lo = np.asarray(scenario.grid.origin)
    hi = lo + np.asarray(scenario.grid.extent)
    return bool(np.all(p >= lo) and np.all(p <= hi))


def _sample_free_point(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    lo = np.asarray(scenario.grid.origin)
    hi = lo + np.asarray(scenario.grid.extent)
    for _ in range(1000):
        p = rng.uniform(lo, hi)
        if not any(b.contains(p) for b in scenario.obstacles):
            return p
    raise RuntimeError("could not sample a free point")


def _sample_spawn(scenario: Scenario, rng: np.random.Generator, placed) -> np.ndarray:
    center = scenario.robot_start
    r_min, r_max = scenario.min_spawn_distance, scenario.spawn_radius
    for _ in range(5000):
        r = rng.uniform(r_min, r_max)
        th = rng.uniform(0, 2 * np.pi)
        p = center + r * np.array([np.cos(th), np.sin(th)])
        if not _in_bounds(scenario, p) or any(b.contains(p) for b in scenario.obstacles):
            continue
        if any(np.hypot(*(p - a.position)) < 2 * scenario.radius for a in placed):
            continue
        return p
    raise RuntimeError("could not place an agent near the robot")


def build_problem(scenario: Scenario, robot_x, agents, t: float) -> PlanningProblem:
    """The TVMDP at time ``t``: occupancy predicted with the belief SFM parameters."""
    cfg = scenario.planner
    dyn = Dynamics(scenario.field, cfg.dt)
    q = scenario.noise.covariance
    forecast = predict_other_vehicles(agents, robot_x, scenario.sfm_belief, cfg.horizon, t, dyn, q,
                                      scenario.grid, cfg.alpha, scenario.obstacles, cfg.ut)
    rw = scenario.reward
    reward = RewardModel(scenario.grid.flat(scenario.goal_cell), forecast.occupancy,
                         rw.collision_penalty, rw.eta, rw.goal_weight, rw.goal_bonus,
                         rw.obstacle_penalty)
    return PlanningProblem(scenario.grid, dyn, q, reward, cfg, t0=t, obstacles=scenario.obstacles,
                           free_mask=_free_mask(scenario))


_MASKS: dict = {}


def _free_mask(scenario: Scenario) -> np.ndarray:
    key = (scenario.grid, scenario.obstacles)
    if key not in _MASKS:
        _MASKS[key] = ~obstacle_mask(scenario.grid, scenario.obstacles)
    return _MASKS[key]


def run_episode(scenario: Scenario, seed: int | None = None, planner: str | None = None,
                record_timing: bool | None = None) -> EpisodeResult:
    """Alternate planning over T steps with executing all T actions, until
    the robot's cell is the goal cell or the step cap is hit."""
    kind = planner or scenario.planner_kind
    if kind not in PLANNERS:
        raise KeyError(f"unknown planner {kind!r}")
    seed = scenario.seed if seed is None else seed
    record_timing = scenario.record_timing if record_timing is None else record_timing
    rng = np.random.default_rng(seed)
    grid = scenario.grid
    cfg = scenario.planner
    dt, T = cfg.dt, cfg.horizon
    noise = None if scenario.noise.is_zero else scenario.noise
    goal = scenario.goal_cell
    radius = scenario.radius
    budget = None if kind in PAUSED_WORLD else cfg.time_budget

    agents = spawn_agents(scenario, rng)
    x = np.array(scenario.robot_start, dtype=float)
    t = scenario.t0
    step = 0
    records: list[TrajectoryRecord] = []
    plan_times: list[float] = []
    stops = {"agent": 0, "obstacle": 0}
    distance = 0.0
    truncated = 0
    reached = discretize_state(x, grid) == goal

    while not reached and step < scenario.step_cap:
        tic = time.perf_counter()
        problem = build_problem(scenario, x, agents, t)
        remaining = None if budget is None else max(0.0, budget - (time.perf_counter() - tic))
        policy = plan(kind, problem, discretize_state(x, grid), budget=remaining)
        wall = time.perf_counter() - tic
        plan_times.append(wall)
        truncated += int(policy.truncated)
        for k in range(T):
            a = policy.action_at(k, discretize_state(x, grid))
            u = grid.actions[a]
            robot_state = AgentState(x, u)
            controls = [sfm_control(ag, robot_state, agents[:i] + agents[i + 1:], scenario.obstacles,
                                    scenario.sfm_true) for i, ag in enumerate(agents)]
            proposed = clip_to_workspace(step_robot(x, u, t, scenario.field, noise, dt, rng), grid)
            moved = []
            for ag, uy in zip(agents, controls):
                nxt = step_uncontrollable(ag, uy, t, scenario.field, noise, dt, rng)
                nxt = replace(nxt, position=clip_to_workspace(nxt.position, grid))
                if any(b.contains(nxt.position) for b in scenario.obstacles):
                    nxt = replace(nxt, position=ag.position, velocity=np.zeros(2))
                moved.append(nxt)
            reason = stop_reason(proposed, scenario.obstacles, moved, radius)
            if reason is not None:
                stops[reason] += 1
            new_x = x if reason is not None else proposed
            records.append(TrajectoryRecord(
                step, t, float(x[0]), float(x[1]), float(u[0]), float(u[1]), int(reason is not None),
                wall if (k == 0 and record_timing) else None,
                tuple((float(ag.position[0]), float(ag.position[1])) for ag in agents)))
            distance += float(np.hypot(*(new_x - x)))
            x = new_x
            agents = [_maybe_new_goal(scenario, ag, rng) for ag in moved]
            t += dt
            step += 1
            if discretize_state(x, grid) == goal:
                reached = True
                break
            if step >= scenario.step_cap:
                break
    records.append(TrajectoryRecord(step, t, float(x[0]), float(x[1]), None, None, 0, None,
                                    tuple((float(a.position[0]), float(a.position[1])) for a in agents)))
    return EpisodeResult(
        reached_goal=reached, distance_traveled=distance, time_to_goal=t - scenario.t0,
        emergency_stops=stops["agent"] + stops["obstacle"], stops_agents=stops["agent"],
        stops_obstacles=stops["obstacle"], records=records, plan_times=plan_times,
        truncated_plans=truncated, planner=kind, seed=seed)


def clip_to_workspace(p, grid) -> np.ndarray:
    """The workspace boundary is a wall: motions past it slide along it."""
    lo = np.asarray(grid.origin, dtype=float)
    return np.clip(p, lo, lo + np.asarray(grid.extent, dtype=float))


def _maybe_new_goal(scenario: Scenario, ag: AgentState, rng) -> AgentState:
    if np.hypot(*(ag.position - ag.goal)) <= scenario.agent_goal_tolerance:
        return replace(ag, goal=_sample_free_point(scenario, rng))
    return ag


def obstacle_penetrations(result: EpisodeResult, obstacles) -> int:
    return sum(any(b.contains((r.x, r.y)) for b in obstacles) for r in result.records)


# --------------------------------------------------------------------------
# campaign

def trial_seed(base: int, n_agents: int, trial: int) -> int:
    """Per-trial seed, shared across planners so every planner sees the same start."""
    return int(np.random.SeedSequence([base, n_agents, trial]).generate_state(1)[0])


def _summary(values) -> dict:
    values = [float(v) for v in values]
    if not values:
        return {"mean": None, "stddev": None}
    sd = statistics.pstdev(values) if len(values) > 1 else 0.0
    return {"mean": statistics.fmean(values), "stddev": sd}


def aggregate(results: list[EpisodeResult]) -> dict:
    return {
        "trials": len(results),
        "success_rate": sum(r.reached_goal for r in results) / len(results) if results else None,
        "distance_m": _summary(r.distance_traveled for r in results),
        "time_s": _summary(r.time_to_goal for r in results),
        "emergency_stops": _summary(r.emergency_stops for r in results),
        "stops_agents": _summary(r.stops_agents for r in results),
        "max_plan_wall_s": max((max(r.plan_times) for r in results if r.plan_times), default=None),
    }


def metrics_campaign(scenario: Scenario, agent_counts, trials: int, planners=("ours",),
                     seed: int | None = None, progress=None) -> dict:
    """Seeded episodes per (planner, agent count); mean/stddev of the metrics."""
    base = scenario.seed if seed is None else seed
    out = {"scenario": scenario.name, "seed": base, "trials": trials, "entries": []}
    for kind in planners:
        for n in agent_counts:
            sc = scenario.with_overrides({"agents.count": int(n), "agents.explicit": []})
            results = []
            for i in range(trials):
                res = run_episode(sc, seed=trial_seed(base, int(n), i), planner=kind)
                results.append(res)
                if progress:
                    progress(kind, n, i, res)
            entry = {"planner": kind, "agents": int(n), **aggregate(results)}
            entry["obstacle_penetrations"] = sum(obstacle_penetrations(r, sc.obstacles) for r in results)
            out["entries"].append(entry)
    return out


# --------------------------------------------------------------------------
# timing benchmark

SWEEPS = {
    "resolution": (4.0, 2.0, 1.0, 0.5),
    "range": (10.0, 20.0, 30.0, 40.0),
    "horizon": (2, 4, 6, 8),
}


def bench_scenario(base: Scenario, sweep: str, value) -> Scenario:
    """Fixed setups: resolution sweep on a 20 m range with T=4; range sweep at
    h=1 m with T=4; horizon sweep on 20 m at h=1 m."""
    if sweep == "resolution":
        extent, h, T = 20.0, float(value), 4
    elif sweep == "range":
        extent, h, T = float(value), 1.0, 4
    elif sweep == "horizon":
        extent, h, T = 20.0, 1.0, int(value)
    else:
        raise KeyError(f"unknown sweep {sweep!r}; choose from {sorted(SWEEPS)}")
    start = [min(5.0, extent / 2) + 0.25 * h, min(5.0, extent / 2) + 0.25 * h]
    n = int(round(extent / h))
    return base.with_overrides({
        "grid.origin_m": [0.0, 0.0],
        "grid.extent_m": [extent, extent],
        "grid.cell_size_m": h,
        "planner.horizon_steps": T,
        "robot.start_m": start,
        "robot.goal_cell": [n - 1, n - 1],
        "obstacles_m": [],
        "agents.count": 0,
        "agents.explicit": [
            {"start_m": [start[0] + 2.0, start[1] + 1.0], "goal_m": [0.5, extent - 0.5]},
            {"start_m": [start[0] - 1.5, start[1] + 2.5], "goal_m": [extent - 0.5, 0.5]},
            {"start_m": [start[0] + 3.0, start[1] - 2.0], "goal_m": [extent - 0.5, extent - 0.5]},
        ],
    })


def timing_benchmark(base: Scenario, sweep: str, values=None, planners=("ours", "fhvi", "ersi", "pi"),
                     cap_s: float = 600.0, repeats: int = 1, progress=None) -> dict:
    """Wall-clock of a single plan invocation per planner per sweep value."""
    values = SWEEPS[sweep] if values is None else values
    table = {"sweep": sweep, "cap_s": cap_s, "entries": []}
    for v in values:
        sc = bench_scenario(base, sweep, v)
        rng = np.random.default_rng(sc.seed)
        agents = spawn_agents(sc, rng)
        problem = build_problem(sc, sc.robot_start, agents, sc.t0)
        start = discretize_state(sc.robot_start, sc.grid)
        for kind in planners:
            entry = {"planner": kind, "value": v, "seconds": None, "status": "ok",
                     "n_states": sc.grid.n_cells * sc.planner.horizon}
            best = None
            for _ in range(max(1, repeats)):
                tic = time.perf_counter()
                try:
                    policy = plan(kind, problem, start, budget=cap_s)
                except SearchSpaceTooLarge as exc:
                    entry["status"] = "refused"
                    entry["detail"] = str(exc)
                    break
                elapsed = time.perf_counter() - tic
                best = elapsed if best is None else min(best, elapsed)
                if policy.truncated:
                    entry["status"] = "timed_out"
                    break
                if "sequences" in policy.stats:
                    entry["enumerations"] = policy.stats["sequences"]
            entry["seconds"] = best
            table["entries"].append(entry)
            if progress:
                progress(entry)
    return table


def format_timing_table(tables) -> str:
    """Planner rows by sweep-value columns, one block per sweep."""
    lines = []
    for tab in tables:
        values = list(dict.fromkeys(e["value"] for e in tab["entries"]))
        planners = list(dict.fromkeys(e["planner"] for e in tab["entries"]))
        lines.append(f"{tab['sweep']:>10} | " + " | ".join(f"{v!s:>9}" for v in values))
        for p in planners:
            cells = []
            for v in values:
                e = next(e for e in tab["entries"] if e["planner"] == p and e["value"] == v)
                if e["status"] != "ok":
                    cells.append(f"{e['status']:>9}")
                else:
                    cells.append(f"{e['seconds']:>8.3f}s")
            lines.append(f"{p:>10} | " + " | ".join(cells))
        lines.append("")
    return "\n".join(lines)

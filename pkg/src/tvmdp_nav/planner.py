"""Reachable-space constrained policy search for the time-varying MDP.

The transition kernel integrates the one-step Gaussian over target cells
and normalizes over the admissible next-step set. The search alternates
three stages per decision step: the union of per-action reachable spaces,
a Bellman backup restricted to that union, and belief propagation under
the updated policy.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .dynamics import AgentState, Dynamics, SfmParams, sfm_control
from .gaussian_filter import GaussianBelief, UTParams, sigma_points, ut_predict
from .reachable import chi2_quantile, ellipsoid_cells, reachable_space_of_actions, reachable_states
from .spaces import Grid, discretize_flat, obstacle_mask

log = logging.getLogger(__name__)

TRUNCATE_BELOW = 1e-12
TINY = 1e-300
MAX_BLOCK = 1 << 21   # elements per dense transition block


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 4
    dt: float = 0.5
    alpha: float = 0.95
    gamma: float = 0.95
    max_iterations: int = 5
    time_budget: float | None = 0.8
    tie_tolerance: float = 1e-9
    ersi_max_sequences: int = 600_000
    ut: UTParams = UTParams()
    missing_value: str = "heuristic"   # or "zero"

    def __post_init__(self):
        if self.missing_value not in ("heuristic", "zero"):
            raise ValueError("missing_value must be 'heuristic' or 'zero'")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class RewardModel:
    """Collision penalty weighted by predicted agent occupancy, plus goal
    shaping applied on the final decision stage.

    Obstacle cells count as occupied with certainty: a transition pays
    ``obstacle_penalty`` times the Gaussian mass that falls inside them.

    ``occupancy`` has shape (n_agents, T + 1, n_cells); entry [i, k, s] is
    the probability that agent i occupies cell s at step k.
    """

    goal: int
    occupancy: np.ndarray
    collision_penalty: float = -100.0
    eta: float = 1.0
    goal_weight: float = 1.0
    goal_bonus: float = 100.0
    obstacle_penalty: float = -100.0

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=float)
        if occ.ndim != 3:
            raise ValueError("occupancy must be (n_agents, T+1, n_cells)")
        if occ.size and (occ.min() < 0 or occ.max() > 1 + 1e-12):
            raise ValueError("occupancy probabilities must lie in [0, 1]")
        object.__setattr__(self, "occupancy", occ)


@dataclass(eq=False)
class PlanningProblem:
    """Everything a planner needs for one decision: the TVMDP at time t0."""

    grid: Grid
    dynamics: Dynamics
    noise_cov: np.ndarray
    reward: RewardModel
    config: PlannerConfig
    t0: float = 0.0
    obstacles: tuple = ()
    free_mask: np.ndarray | None = None

    def __post_init__(self):
        self.noise_cov = np.asarray(self.noise_cov, dtype=float)
        if self.free_mask is None:
            self.free_mask = ~obstacle_mask(self.grid, self.obstacles)
        self._stage_rewards: dict[int, np.ndarray] = {}
        self._goal_term = None

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def actions(self) -> np.ndarray:
        return self.grid.actions

    def t(self, k: int) -> float:
        return self.t0 + k * self.config.dt

    @property
    def free_cells(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    @property
    def obstacle_cells(self) -> np.ndarray:
        return np.flatnonzero(~self.free_mask)

    def goal_term(self) -> np.ndarray:
        if self._goal_term is None:
            rw = self.reward
            goal_xy = self.grid.centers[rw.goal]
            dist = np.hypot(*(self.grid.centers - goal_xy).T)
            term = -rw.goal_weight * dist
            term[rw.goal] += rw.goal_bonus
            self._goal_term = term
        return self._goal_term

    def default_values(self, k: int) -> np.ndarray:
        """Stand-in for v(s, t_k) where no value has been computed.

        "zero" is the literal rule. "heuristic" is an optimistic distance
        bound: the goal-distance penalty after moving straight at the
        longest action for the remaining steps, without the goal bonus.
        """
        T = self.horizon
        if k >= T or self.config.missing_value == "zero":
            return np.zeros(self.grid.n_cells)
        m = T - k
        reach = m * self.config.dt * float(np.max(np.linalg.norm(self.grid.actions, axis=1)))
        goal_xy = self.grid.centers[self.reward.goal]
        dist = np.hypot(*(self.grid.centers - goal_xy).T)
        return -self.config.gamma ** (m - 1) * self.reward.goal_weight * np.maximum(0.0, dist - reach)

    def stage_reward(self, k: int) -> np.ndarray:
        """r_k(s') over all cells for transitions t_k -> t_{k+1}."""
        if k not in self._stage_rewards:
            rw = self.reward
            r = np.zeros(self.grid.n_cells)
            occ = rw.occupancy
            if occ.shape[0] and k + 1 < occ.shape[1]:
                r += rw.eta * rw.collision_penalty * occ[:, k + 1, :].sum(axis=0)
            if k == self.horizon - 1:
                r = r + self.goal_term()
            self._stage_rewards[k] = r
        return self._stage_rewards[k]


# --------------------------------------------------------------------------
# transition kernel

def cell_masses(means: np.ndarray, targets: np.ndarray, cov: np.ndarray, grid: Grid) -> np.ndarray:
    """Gaussian mass of each target cell for each mean: (m, 2) x (n,) -> (m, n).

    Diagonal covariances integrate exactly as a product of 1-D CDF
    differences over the cell edges; other covariances use the density at
    the cell center times the cell area.
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    targets = np.asarray(targets, dtype=np.int64)
    cov = np.asarray(cov, dtype=float)
    h = grid.cell_size
    lo = np.asarray(grid.origin) + grid.cell_ij[targets] * h          # (n, 2)
    if not np.any(cov - np.diag(np.diag(cov))):
        sd = np.sqrt(np.diag(cov))
        out = np.ones((means.shape[0], targets.size))
        for ax in range(2):
            a = lo[None, :, ax] - means[:, None, ax]
            b = a + h
            if sd[ax] > 0:
                a = a / sd[ax]
                b = b / sd[ax]
                # evaluate in the lower tail for accuracy
                upper = a > 0
                p = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
            else:
                p = ((a <= 0) & (b > 0)).astype(float)
            out *= p
        return out
    c = cov + 1e-12 * np.eye(2)
    prec = np.linalg.inv(c)
    norm = h * h / (2 * np.pi * np.sqrt(np.linalg.det(c)))
    d = (lo + 0.5 * h)[None, :, :] - means[:, None, :]
    m2 = np.einsum("mni,ij,mnj->mn", d, prec, d)
    return norm * np.exp(-0.5 * m2)


def normalize_rows(mass: np.ndarray, truncate: float = TRUNCATE_BELOW) -> np.ndarray:
    total = mass.sum(axis=1, keepdims=True)
    degenerate = total[:, 0] < TINY
    if np.any(degenerate):
        log.warning("%d transition rows without mass on the admissible set; using uniform rows",
                    int(degenerate.sum()))
        mass = mass.copy()
        mass[degenerate] = 1.0
        total = mass.sum(axis=1, keepdims=True)
    p = mass / total
    if truncate > 0:
        p[p < truncate] = 0.0
        p /= p.sum(axis=1, keepdims=True)
    return p


def transition_matrix(problem: PlanningProblem, sources: np.ndarray, action: int, k: int,
                      targets: np.ndarray) -> np.ndarray:
    """Rows p(s' | s, a, t_k) for every source cell over ``targets``."""
    return normalize_rows(cell_masses(_means(problem, sources, action, k), targets,
                                      problem.noise_cov, problem.grid))


def _means(problem: PlanningProblem, sources, action: int, k: int) -> np.ndarray:
    centers = problem.grid.centers[np.asarray(sources, dtype=np.int64)]
    return problem.dynamics(centers, problem.actions[action], problem.t(k))


def obstacle_cost(problem: PlanningProblem, sources: np.ndarray, action: int, k: int) -> np.ndarray:
    """Per-source penalty for the one-step mass landing in obstacle cells."""
    pen = problem.reward.obstacle_penalty
    obs = problem.obstacle_cells
    if pen == 0 or obs.size == 0:
        return np.zeros(len(sources))
    mass = cell_masses(_means(problem, sources, action, k), obs, problem.noise_cov, problem.grid)
    return pen * np.minimum(mass.sum(axis=1), 1.0)


def expected_returns(problem: PlanningProblem, sources: np.ndarray, action: int, k: int,
                     targets: np.ndarray, ret: np.ndarray) -> np.ndarray:
    """sum_s' p(s'|s,a) ret(s') plus the obstacle cost, for each source."""
    P = transition_matrix(problem, sources, action, k, targets)
    return P @ ret + obstacle_cost(problem, sources, action, k)


@dataclass(frozen=True)
class TransitionRow:
    source: tuple[int, int]
    action: int
    step: int
    targets: list    # [((i, j), probability), ...]

    def total(self) -> float:
        return float(sum(p for _, p in self.targets))


def transition_row(problem: PlanningProblem, s, a: int, k: int, next_set) -> TransitionRow:
    grid = problem.grid
    targets = np.array(sorted(grid.flat(x) if isinstance(x, tuple) else int(x) for x in next_set),
                       dtype=np.int64)
    if targets.size == 0:
        raise ValueError("admissible next-state set is empty")
    src = grid.flat(s) if isinstance(s, tuple) else int(s)
    p = transition_matrix(problem, np.array([src]), a, k, targets)[0]
    return TransitionRow(grid.unflat(src), a, k,
                         [(grid.unflat(t), float(q)) for t, q in zip(targets, p)])


def step_reward(row: TransitionRow, problem: PlanningProblem) -> float:
    """Expected one-step reward of a row, including its obstacle cost."""
    r = problem.stage_reward(row.step)
    grid = problem.grid
    src = np.array([grid.flat(row.source)])
    return float(sum(p * r[grid.flat(s)] for s, p in row.targets)
                 + obstacle_cost(problem, src, row.action, row.step)[0])


def _next_values(problem: PlanningProblem, k: int, values_next: np.ndarray) -> np.ndarray:
    missing = np.isnan(values_next)
    if not missing.any():
        return values_next
    return np.where(missing, problem.default_values(k + 1), values_next)


def backup(problem: PlanningProblem, k: int, sources: np.ndarray, targets: np.ndarray,
           values_next: np.ndarray, stats: dict | None = None) -> np.ndarray:
    """Q-values (m, A) of a Bellman backup from ``sources`` restricted to ``targets``.

    Missing (NaN) next-step values take ``problem.default_values(k + 1)``.
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    gamma = problem.config.gamma
    ret = problem.stage_reward(k)[targets] + gamma * _next_values(problem, k, values_next)[targets]
    q = np.empty((sources.size, problem.grid.n_actions))
    chunk = max(1, MAX_BLOCK // max(1, targets.size))
    for a in range(problem.grid.n_actions):
        for lo in range(0, sources.size, chunk):
            q[lo:lo + chunk, a] = expected_returns(problem, sources[lo:lo + chunk], a, k, targets, ret)
    if stats is not None:
        stats["rows"] = stats.get("rows", 0) + sources.size * problem.grid.n_actions
    return q


def select_actions(q: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """argmax over actions; within ``tol`` of the best, the lowest index wins."""
    best = q.max(axis=1)
    choice = np.argmax(q >= best[:, None] - tol, axis=1)
    return choice, q[np.arange(q.shape[0]), choice]


def bellman_update(problem: PlanningProblem, s, k: int, reachable_next, values_next) -> tuple[float, int]:
    targets = getattr(reachable_next, "cells", None)
    if targets is None:
        targets = np.array(sorted(problem.grid.flat(x) if isinstance(x, tuple) else int(x)
                                  for x in reachable_next), dtype=np.int64)
    src = problem.grid.flat(s) if isinstance(s, tuple) else int(s)
    q = backup(problem, k, np.array([src]), targets, values_next)
    a, v = select_actions(q, problem.config.tie_tolerance)
    return float(v[0]), int(a[0])


# --------------------------------------------------------------------------
# policies

@dataclass(eq=False)
class TimedPolicy:
    """Per-step action and value tables over flat cells.

    ``actions[k, s] == -1`` marks a state without an assigned action; values
    are NaN there. ``values`` has one extra row for the terminal step.
    """

    grid: Grid
    actions: np.ndarray
    values: np.ndarray
    start: int
    truncated: bool = False
    iterations: int = 0
    value_history: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, grid: Grid, horizon: int, start: int) -> "TimedPolicy":
        values = np.full((horizon + 1, grid.n_cells), np.nan)
        values[horizon] = 0.0
        return cls(grid, np.full((horizon, grid.n_cells), -1, dtype=np.int64), values, start)

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def value(self) -> float:
        """v at (s_0, t_0)."""
        return float(self.values[0, self.start])

    @property
    def first_action(self) -> int:
        return int(self.actions[0, self.start])

    def covered(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.actions[k] >= 0)

    def actions_for_cells(self, k: int, cells: np.ndarray) -> np.ndarray:
        """Actions at step k; uncovered cells borrow the nearest covered cell's action."""
        cells = np.asarray(cells, dtype=np.int64)
        row = self.actions[min(k, self.horizon - 1)]
        out = row[cells].copy()
        missing = out < 0
        if np.any(missing):
            cov = np.flatnonzero(row >= 0)
            if cov.size == 0:
                out[missing] = _zero_action(self.grid)
            else:
                c = self.grid.centers
                d = ((c[cells[missing]][:, None, :] - c[cov][None, :, :]) ** 2).sum(-1)
                out[missing] = row[cov[np.argmin(d, axis=1)]]
        return out

    def action_at(self, k: int, s) -> int:
        idx = self.grid.flat(s) if isinstance(s, tuple) else int(s)
        return int(self.actions_for_cells(k, np.array([idx]))[0])

    def control_at_points(self, k: int, points: np.ndarray) -> np.ndarray:
        cells = discretize_flat(points, self.grid)
        return self.grid.actions[self.actions_for_cells(k, cells)]


def _zero_action(grid: Grid) -> int:
    return int(np.argmin(np.linalg.norm(grid.actions, axis=1)))


class _Deadline:
    def __init__(self, budget: float | None, clock=time.perf_counter):
        self.clock = clock
        self.end = None if budget is None else clock() + budget

    def expired(self) -> bool:
        return self.end is not None and self.clock() >= self.end


def initial_belief(problem: PlanningProblem, start: int) -> GaussianBelief:
    return GaussianBelief.point(problem.grid.centers[start])


def policy_search(problem: PlanningProblem, start, *, deadline: _Deadline | None = None) -> TimedPolicy:
    """Iterated three-stage reachable-space policy search from ``start``."""
    grid, cfg = problem.grid, problem.config
    s0 = grid.flat(start) if isinstance(start, tuple) else int(start)
    T = cfg.horizon
    deadline = deadline or _Deadline(cfg.time_budget)
    policy = TimedPolicy.empty(grid, T, s0)
    stats = policy.stats
    beliefs: list[GaussianBelief | None] = [initial_belief(problem, s0)] + [None] * T
    reach = [np.array([s0])] + [None] * T
    for it in range(cfg.max_iterations):
        changed = False
        for k in range(T):
            if deadline.expired():
                policy.truncated = True
                break
            b_k = beliefs[k]
            sigma = sigma_points(b_k, cfg.ut)
            # stage 1: union of per-action reachable spaces
            union, _ = reachable_space_of_actions(
                b_k, problem.actions, problem.t(k), problem.dynamics, problem.noise_cov,
                cfg.alpha, grid, problem.free_mask, step=k, sigma=sigma, ut_params=cfg.ut)
            # stage 2: constrained Bellman backup over the current reachable space
            src = reach[k]
            q = backup(problem, k, src, union.cells, policy.values[k + 1], stats)
            act, val = select_actions(q, cfg.tie_tolerance)
            if np.any(policy.actions[k, src] != act):
                changed = True
            policy.actions[k, src] = act
            policy.values[k, src] = val
            # stage 3: belief and reachable space under the updated policy
            b_next = ut_predict(b_k, lambda pts, k=k: policy.control_at_points(k, pts),
                                problem.t(k), problem.dynamics, problem.noise_cov, cfg.ut,
                                sigma=sigma)
            beliefs[k + 1] = b_next
            reach[k + 1] = reachable_states(b_next, cfg.alpha, grid, problem.free_mask,
                                            step=k + 1).cells
        policy.iterations = it + 1
        policy.value_history.append(policy.value)
        if policy.truncated or not changed:
            break
    stats["reachable_sizes"] = [None if r is None else int(r.size) for r in reach]
    return policy


# --------------------------------------------------------------------------
# behaviour prediction of the uncontrollable agents

@dataclass(eq=False)
class OccupancyForecast:
    beliefs: list          # [agent][k] GaussianBelief, k = 0..T
    occupancy: np.ndarray  # (n_agents, T + 1, n_cells)


def occupancy_map(b: GaussianBelief, alpha: float, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Cells in the belief's confidence region and their normalized mass."""
    if not np.any(b.cov):
        return np.array([int(discretize_flat(b.mean, grid))]), np.ones(1)
    cells = ellipsoid_cells(b.mean, b.cov, chi2_quantile(2, alpha), grid)
    mass = cell_masses(b.mean[None, :], cells, b.cov, grid)[0]
    total = mass.sum()
    if total < TINY:
        return cells, np.full(cells.size, 1.0 / cells.size)
    return cells, mass / total


def predict_other_vehicles(agents, robot_position, sfm: SfmParams, horizon: int, t0: float,
                           dynamics: Dynamics, noise_cov, grid: Grid, alpha: float,
                           obstacles=(), ut: UTParams = UTParams()) -> OccupancyForecast:
    """Propagate every agent's belief with SFM controls evaluated at the belief
    means of all agents (independent agents, mean-field controls)."""
    n = len(agents)
    occ = np.zeros((n, horizon + 1, grid.n_cells))
    beliefs = [[GaussianBelief.point(a.position)] for a in agents]
    states = [AgentState(a.position, a.velocity, a.goal) for a in agents]
    robot = None if robot_position is None else AgentState(np.asarray(robot_position, dtype=float))
    for i in range(n):
        cells, p = occupancy_map(beliefs[i][0], alpha, grid)
        occ[i, 0, cells] = p
    for k in range(horizon):
        t = t0 + k * dynamics.dt
        controls = [sfm_control(states[i], robot, states[:i] + states[i + 1:], obstacles, sfm)
                    for i in range(n)]
        for i in range(n):
            b = ut_predict(beliefs[i][-1], controls[i], t, dynamics, noise_cov, ut)
            beliefs[i].append(b)
            cells, p = occupancy_map(b, alpha, grid)
            occ[i, k + 1, cells] = p
        states = [AgentState(beliefs[i][-1].mean, controls[i], states[i].goal) for i in range(n)]
    return OccupancyForecast(beliefs, occ)

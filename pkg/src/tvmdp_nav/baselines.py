"""Comparison planners: full finite-horizon value iteration (FHVI),
exhaustive reachable-space iteration (ERSI) and reachable-space policy
iteration (PI), plus exact policy evaluation on the full grid."""
from __future__ import annotations

import numpy as np

from .gaussian_filter import ut_predict, ut_predict_batch
from .planner import (PlanningProblem, TimedPolicy, _Deadline, _zero_action, backup,
                      initial_belief, policy_search, select_actions, expected_returns)
from .reachable import chi2_quantile, reachable_space_of_actions, reachable_states, union_of_ellipsoids

BASELINES = ("fhvi", "ersi", "pi")


class SearchSpaceTooLarge(RuntimeError):
    pass


def _start_index(problem: PlanningProblem, start) -> int:
    return problem.grid.flat(start) if isinstance(start, tuple) else int(start)


def fhvi(problem: PlanningProblem, start, *, deadline: _Deadline | None = None) -> TimedPolicy:
    """Backward induction over every free cell, action and step."""
    s0 = _start_index(problem, start)
    cfg = problem.config
    deadline = deadline or _Deadline(None)
    policy = TimedPolicy.empty(problem.grid, cfg.horizon, s0)
    free = problem.free_cells
    for k in range(cfg.horizon - 1, -1, -1):
        if deadline.expired():
            policy.truncated = True
            break
        q = backup(problem, k, free, free, policy.values[k + 1], policy.stats)
        act, val = select_actions(q, cfg.tie_tolerance)
        policy.actions[k, free] = act
        policy.values[k, free] = val
    policy.iterations = 1
    policy.value_history.append(policy.value)
    return policy


def ersi(problem: PlanningProblem, start, *, deadline: _Deadline | None = None) -> TimedPolicy:
    """Enumerate every open-loop action sequence, sweep the reachable spaces
    of all of them, and back up over the per-step unions."""
    s0 = _start_index(problem, start)
    cfg = problem.config
    grid = problem.grid
    n_actions = grid.n_actions
    n_seq = n_actions ** cfg.horizon
    if n_seq > cfg.ersi_max_sequences:
        raise SearchSpaceTooLarge(
            f"ERSI would enumerate {n_seq} action sequences (cap {cfg.ersi_max_sequences})")
    deadline = deadline or _Deadline(None)
    policy = TimedPolicy.empty(grid, cfg.horizon, s0)
    thr = chi2_quantile(2, cfg.alpha)
    means = grid.centers[s0][None, :]
    covs = np.zeros((1, 2, 2))
    unions = [np.array([s0])]
    for k in range(cfg.horizon):
        if deadline.expired():
            policy.truncated = True
            return policy
        mu, cov = ut_predict_batch(means, covs, problem.actions, problem.t(k),
                                   problem.dynamics, problem.noise_cov, cfg.ut)
        means = mu.reshape(-1, 2)
        covs = cov.reshape(-1, 2, 2)
        unions.append(union_of_ellipsoids(means, covs, thr, grid, problem.free_mask))
    policy.stats["sequences"] = int(means.shape[0])
    policy.stats["union_sizes"] = [int(u.size) for u in unions]
    for k in range(cfg.horizon - 1, -1, -1):
        if deadline.expired():
            policy.truncated = True
            break
        q = backup(problem, k, unions[k], unions[k + 1], policy.values[k + 1], policy.stats)
        act, val = select_actions(q, cfg.tie_tolerance)
        policy.actions[k, unions[k]] = act
        policy.values[k, unions[k]] = val
    policy.iterations = 1
    policy.value_history.append(policy.value)
    return policy


def pi_reachable(problem: PlanningProblem, start, *, initial_action: int | None = None,
                 deadline: _Deadline | None = None) -> TimedPolicy:
    """Alternate a full forward pass computing the reachable spaces of the
    current policy with a full backward improvement over them.

    Each improvement step backs up from the policy's reachable space at k
    onto its reachable space at k+1 joined with the per-action reachable
    spaces of the step-k belief; values off the former take the problem's
    missing-value default.
    """
    s0 = _start_index(problem, start)
    cfg = problem.config
    grid = problem.grid
    T = cfg.horizon
    deadline = deadline or _Deadline(cfg.time_budget)
    a0 = _zero_action(grid) if initial_action is None else int(initial_action)
    policy = TimedPolicy.empty(grid, T, s0)
    policy.actions[:] = a0
    for it in range(cfg.max_iterations):
        if deadline.expired():
            policy.truncated = True
            break
        b = initial_belief(problem, s0)
        reach = [np.array([s0])]
        targets = []
        for k in range(T):
            union, _ = reachable_space_of_actions(b, problem.actions, problem.t(k), problem.dynamics,
                                                  problem.noise_cov, cfg.alpha, grid, problem.free_mask,
                                                  step=k, ut_params=cfg.ut)
            b = ut_predict(b, lambda pts, k=k: policy.control_at_points(k, pts), problem.t(k),
                           problem.dynamics, problem.noise_cov, cfg.ut)
            reach.append(reachable_states(b, cfg.alpha, grid, problem.free_mask, k + 1).cells)
            targets.append(np.union1d(union.cells, reach[-1]))
        values = np.full((T + 1, grid.n_cells), np.nan)
        values[T] = 0.0
        changed = False
        for k in range(T - 1, -1, -1):
            q = backup(problem, k, reach[k], targets[k], values[k + 1], policy.stats)
            act, val = select_actions(q, cfg.tie_tolerance)
            changed |= bool(np.any(policy.actions[k, reach[k]] != act))
            policy.actions[k, reach[k]] = act
            values[k, reach[k]] = val
        policy.values = values
        policy.iterations = it + 1
        policy.value_history.append(policy.value)
        if not changed:
            break
    return policy


def evaluate_policy(problem: PlanningProblem, policy: TimedPolicy) -> np.ndarray:
    """Exact finite-horizon values of ``policy`` under the full-grid model.

    States the policy does not cover use the nearest covered state's action.
    Returns a (T + 1, n_cells) table, NaN on obstacle cells.
    """
    cfg = problem.config
    T = cfg.horizon
    free = problem.free_cells
    values = np.full((T + 1, problem.grid.n_cells), np.nan)
    values[T, free] = 0.0
    for k in range(T - 1, -1, -1):
        acts = policy.actions_for_cells(k, free)
        ret = problem.stage_reward(k)[free] + cfg.gamma * values[k + 1, free]
        for a in np.unique(acts):
            src = free[acts == a]
            values[k, src] = expected_returns(problem, src, int(a), k, free, ret)
    return values


PLANNERS = {
    "ours": policy_search,
    "fhvi": fhvi,
    "ersi": ersi,
    "pi": pi_reachable,
}

# exhaustive planners run with the simulated world paused
PAUSED_WORLD = frozenset({"fhvi", "ersi"})


def plan(kind: str, problem: PlanningProblem, start, *, budget: float | None = "config") -> TimedPolicy:
    if kind not in PLANNERS:
        raise KeyError(f"unknown planner {kind!r}; choose from {sorted(PLANNERS)}")
    if budget == "config":
        budget = None if kind in PAUSED_WORLD else problem.config.time_budget
    return PLANNERS[kind](problem, start, deadline=_Deadline(budget))

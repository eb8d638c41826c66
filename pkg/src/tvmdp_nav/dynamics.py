"""Motion models for the controlled robot and the uncontrollable agents.

Both use single-integrator kinematics ``f(x, u) = x + u * dt`` plus the
disturbance displacement ``g(x, t)`` and optional Gaussian noise. The
uncontrollable agents choose their velocity with a social force model.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .disturbance import DisturbanceField, NoiseModel, eval_field


@dataclass(frozen=True)
class Dynamics:
    """Deterministic part ``z(x, u, t) = f(x, u) + g(x, t)`` for one step."""

    field: DisturbanceField = DisturbanceField()
    dt: float = 0.5

    def __call__(self, x, u, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x + np.asarray(u, dtype=float) * self.dt + eval_field(self.field, x, t, self.dt)


def step_robot(x, u, t: float, field: DisturbanceField, noise: NoiseModel | None,
               dt: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """One step of the robot; pass ``noise=None`` for the deterministic mode."""
    nxt = Dynamics(field, dt)(x, u, t)
    if noise is not None:
        if rng is None:
            raise ValueError("an rng stream is required when noise is enabled")
        nxt = nxt + noise.sample(rng)
    return nxt


def transition_density(x_next, x, u, t: float, field: DisturbanceField,
                       noise: NoiseModel, dt: float) -> float:
    q = noise.covariance
    if np.linalg.matrix_rank(q) < q.shape[0]:
        raise np.linalg.LinAlgError(
            "transition density undefined for singular noise; use the deterministic mode")
    mean = Dynamics(field, dt)(x, u, t)
    d = np.asarray(x_next, dtype=float) - mean
    n = d.shape[0]
    m2 = d @ np.linalg.solve(q, d)
    return float(np.exp(-0.5 * m2) / np.sqrt((2 * np.pi) ** n * np.linalg.det(q)))


@dataclass(frozen=True)
class AgentState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    goal: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        for name in ("position", "velocity", "goal"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class SfmParams:
    goal_gain: float = 1.0             # 1/s
    desired_speed: float = 1.5         # m/s
    repulsion_strength: float = 2.0    # m/s^2
    repulsion_range: float = 2.0       # m
    obstacle_strength: float = 3.0     # m/s^2
    obstacle_range: float = 1.5        # m
    max_speed: float = 2.0             # m/s

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"SFM parameter {k} must be positive, got {v}")


_DEGENERATE_DIR = np.array([1.0, 0.0])


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.hypot(v[0], v[1])
    return v / n if n > 0 else np.zeros(2)


def _repulsion(pos, other, strength, rng_) -> np.ndarray:
    d = pos - other
    dist = np.hypot(d[0], d[1])
    direction = d / dist if dist > 0 else _DEGENERATE_DIR
    return strength * np.exp(-dist / rng_) * direction


def sfm_forces(me: AgentState, robot: AgentState | None, others, obstacles,
               params: SfmParams) -> np.ndarray:
    """Sum of goal attraction and exponential repulsion terms (m/s per step)."""
    pos = me.position
    total = params.goal_gain * (params.desired_speed * _unit(me.goal - pos) - me.velocity)
    neighbours = list(others)
    if robot is not None:
        neighbours.append(robot)
    for other in neighbours:
        total = total + _repulsion(pos, other.position, params.repulsion_strength,
                                   params.repulsion_range)
    for box in obstacles:
        total = total + _repulsion(pos, box.nearest_point(pos), params.obstacle_strength,
                                   params.obstacle_range)
    return total


def sfm_control(me: AgentState, robot: AgentState | None, others, obstacles,
                params: SfmParams) -> np.ndarray:
    """Velocity command of one agent: current velocity plus the social forces
    over a unit relaxation time, clipped to ``max_speed``."""
    u = me.velocity + sfm_forces(me, robot, others, obstacles, params)
    speed = np.hypot(u[0], u[1])
    if speed > params.max_speed:
        u = u * (params.max_speed / speed)
    return u


def step_uncontrollable(y: AgentState, u_y, t: float, field: DisturbanceField,
                        noise: NoiseModel | None, dt: float,
                        rng: np.random.Generator | None = None) -> AgentState:
    pos = step_robot(y.position, u_y, t, field, noise, dt, rng)
    return replace(y, position=pos, velocity=np.asarray(u_y, dtype=float))

"""Deterministic disturbance fields g(x, t) and the additive Gaussian noise.

Field functions return a displacement over one step of length ``dt``
(meters), and broadcast over leading axes of ``x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GyreParams:
    strength: float = 0.5   # A
    size: float = 15.0      # s, meters


@dataclass(frozen=True)
class VortexParams:
    radius: float = 5.0              # r, meters
    omega: float = 0.1               # rad/s
    center: tuple[float, float] = (15.0, 15.0)


@dataclass(frozen=True)
class DisturbanceField:
    kind: str = "none"   # none | gyre | dynamic-vortex
    gyre: GyreParams = GyreParams()
    vortex: VortexParams = VortexParams()

    def __post_init__(self):
        if self.kind not in ("none", "gyre", "dynamic-vortex"):
            raise ConfigurationError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "gyre" and self.gyre.size <= 0:
            raise ConfigurationError("gyre size must be positive")
        if self.kind == "dynamic-vortex" and self.vortex.radius < 0:
            raise ConfigurationError("vortex radius must be non-negative")


def eval_gyre(x, params: GyreParams, dt: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a, s = params.strength, params.size
    px, py = np.pi * x[..., 0] / s, np.pi * x[..., 1] / s
    gx = -np.pi * a * np.sin(px) * np.cos(py) * dt
    gy = np.pi * a * np.cos(px) * np.sin(py) * dt
    return np.stack([gx, gy], axis=-1)


def vortex_center(t: float, params: VortexParams) -> np.ndarray:
    cx, cy = params.center
    return np.array([params.radius * np.cos(params.omega * t) + cx,
                     params.radius * np.sin(params.omega * t) + cy])


def eval_vortex(x, t: float, params: VortexParams, dt: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xc = vortex_center(t, params)
    gx = -dt * x[..., 0] + dt * xc[0]
    gy = dt * x[..., 1] - dt * xc[1]
    return np.stack([gx, gy], axis=-1)


def eval_field(field: DisturbanceField, x, t: float, dt: float) -> np.ndarray:
    if field.kind == "gyre":
        return eval_gyre(x, field.gyre, dt)
    if field.kind == "dynamic-vortex":
        return eval_vortex(x, t, field.vortex, dt)
    return np.zeros(np.shape(x), dtype=float)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Zero-mean Gaussian noise with covariance Q (m^2)."""

    covariance: np.ndarray

    def __post_init__(self):
        q = np.array(self.covariance, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ConfigurationError(f"noise covariance must be square, got shape {q.shape}")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ConfigurationError("noise covariance must be symmetric")
        eig = np.linalg.eigvalsh(q)
        if eig.min() < -1e-12:
            raise ConfigurationError(f"noise covariance not PSD (eigenvalue {eig.min():.3g})")
        q.setflags(write=False)
        object.__setattr__(self, "covariance", q)
        object.__setattr__(self, "_factor", _psd_factor(q))

    @classmethod
    def identity(cls, n: int = 2) -> "NoiseModel":
        return cls(np.eye(n))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.covariance)

    @property
    def is_diagonal(self) -> bool:
        q = self.covariance
        return not np.any(q - np.diag(np.diag(q)))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return sample_noise(self, rng)


def _psd_factor(q: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(q)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(q)
        return v * np.sqrt(np.clip(w, 0.0, None))


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    n = model.covariance.shape[0]
    z = rng.standard_normal(n)
    return model._factor @ z

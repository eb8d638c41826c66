"""Unscented-transform prediction of Gaussian state beliefs.

Only the prediction step is implemented; there are no measurement updates.
The module is dimension-generic except for ``ut_predict_batch``, which is
the vectorized 2-D path used by the exhaustive baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

EIG_TOL = 1e-12


class SigmaPointError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def point(cls, x) -> "GaussianBelief":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros((x.size, x.size)))


@dataclass(frozen=True)
class UTParams:
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None   # None -> 3 - n

    def lam(self, n: int) -> float:
        kappa = 3.0 - n if self.kappa is None else self.kappa
        return self.alpha ** 2 * (n + kappa) - n


@dataclass(frozen=True, eq=False)
class SigmaSet:
    points: np.ndarray   # (2n+1, n)
    wm: np.ndarray
    wc: np.ndarray


def clamp_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and zero eigenvalues in [-EIG_TOL, 0); reject anything lower."""
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w.min() < -EIG_TOL * max(1.0, abs(w.max())):
        raise SigmaPointError(f"covariance is not PSD: eigenvalue {w.min():.6g}")
    if w.min() < 0:
        cov = (v * np.clip(w, 0.0, None)) @ v.T
    return cov


def semidefinite_cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = a for PSD ``a``; zero pivots give zero columns."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pass
    n = a.shape[0]
    scale = max(1.0, float(np.abs(a).max()))
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d < -1e-9 * scale:
            raise SigmaPointError(f"Cholesky failed: negative pivot {d:.6g} at column {j}")
        if d <= 1e-14 * scale:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def sigma_points(b: GaussianBelief, params: UTParams = UTParams()) -> SigmaSet:
    n = b.dim
    lam = params.lam(n)
    c = n + lam
    if c <= 0:
        raise ValueError(f"UT scaling n + lambda must be positive, got {c}")
    cov = clamp_psd(b.cov)
    if np.any(cov):
        root = semidefinite_cholesky(c * cov)
    else:
        root = np.zeros((n, n))
    pts = np.empty((2 * n + 1, n))
    pts[0] = b.mean
    pts[1:n + 1] = b.mean + root.T
    pts[n + 1:] = b.mean - root.T
    wm = np.full(2 * n + 1, 1.0 / (2 * c))
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1 - params.alpha ** 2 + params.beta)
    return SigmaSet(pts, wm, wc)


def _controls(control, pts: np.ndarray) -> np.ndarray:
    # fixed action, or a callable mapping (m, n) sigma points to (m, M) actions

    if callable(control):
        return np.asarray(control(pts), dtype=float)
    return np.broadcast_to(np.asarray(control, dtype=float), pts.shape)


def unscented_transform(sigma: SigmaSet, z: np.ndarray, noise_cov) -> GaussianBelief:
    mu = sigma.wm @ z
    d = z - mu
    cov = (d.T * sigma.wc) @ d
    if noise_cov is not None:
        cov = cov + noise_cov
    return GaussianBelief(mu, cov)


def ut_predict(b: GaussianBelief, control, t: float, dynamics, noise_cov,
               params: UTParams = UTParams(), sigma: SigmaSet | None = None) -> GaussianBelief:
    """Propagate ``b`` one step through ``dynamics(x, u, t)`` and add ``noise_cov``."""
    if sigma is None:
        sigma = sigma_points(b, params)
    z = dynamics(sigma.points, _controls(control, sigma.points), t)
    return unscented_transform(sigma, z, noise_cov)


def predict_chain(b0: GaussianBelief, controls, times: Sequence[float], dynamics, noise_cov,
                  params: UTParams = UTParams()) -> list[GaussianBelief]:
    """Iterate ``ut_predict`` for k = 0..T-1.

    ``controls`` is a sequence of length T (each entry a fixed action or a
    per-step policy callable) or a callable ``(k, points) -> actions``.
    ``times`` holds t_0..t_{T-1} (extra entries are ignored).
    """
    horizon = len(controls) if not callable(controls) else len(times)
    if not callable(controls) and len(times) < horizon:
        raise ValueError("need one decision time per control")
    out = [b0]
    for k in range(horizon):
        if callable(controls):
            ctrl = (lambda pts, k=k: controls(k, pts))
        else:
            ctrl = controls[k]
        out.append(ut_predict(out[-1], ctrl, times[k], dynamics, noise_cov, params))
    return out


def ut_predict_batch(means: np.ndarray, covs: np.ndarray, actions: np.ndarray, t: float,
                     dynamics, noise_cov, params: UTParams = UTParams()):
    """Vectorized 2-D ``ut_predict`` of B beliefs under each of A fixed actions.

    Returns ``(means (B, A, 2), covs (B, A, 2, 2))``.
    """
    n = 2
    lam = params.lam(n)
    c = n + lam
    a = np.clip(c * covs[:, 0, 0], 0.0, None)
    bxy = c * covs[:, 1, 0]
    d = c * covs[:, 1, 1]
    l11 = np.sqrt(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        l21 = np.where(l11 > 0, bxy / np.where(l11 > 0, l11, 1.0), 0.0)
    l22 = np.sqrt(np.clip(d - l21 ** 2, 0.0, None))
    B = means.shape[0]
    pts = np.empty((B, 5, 2))
    pts[:, 0] = means
    col0 = np.stack([l11, l21], axis=-1)
    col1 = np.stack([np.zeros_like(l22), l22], axis=-1)
    pts[:, 1] = means + col0
    pts[:, 2] = means + col1
    pts[:, 3] = means - col0
    pts[:, 4] = means - col1
    wm = np.full(5, 1.0 / (2 * c))
    wc = wm.copy()
    wm[0] = lam / c
    wc[0] = lam / c + (1 - params.alpha ** 2 + params.beta)
    A = actions.shape[0]
    z = dynamics(pts[:, None, :, :], actions[None, :, None, :], t)   # (B, A, 5, 2)
    mu = np.einsum("i,baij->baj", wm, z)
    dz = z - mu[:, :, None, :]
    cov = np.einsum("i,baij,baik->bajk", wc, dz, dz)
    if noise_cov is not None:
        cov = cov + noise_cov
    return mu, cov.reshape(B, A, 2, 2)

"""Confidence-region reachable spaces over the grid."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaincc

from .disturbance import ConfigurationError
from .gaussian_filter import GaussianBelief, SigmaSet, UTParams, sigma_points, ut_predict
from .spaces import Grid, discretize_flat

REGULARIZATION = 1e-9


@lru_cache(maxsize=256)
def chi2_quantile(dof: int, alpha: float) -> float:
    """x with P(chi2_dof <= x) = alpha, by bisection on the incomplete gamma."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"confidence must lie in (0, 1), got {alpha}")
    if dof < 1:
        raise ConfigurationError(f"degrees of freedom must be >= 1, got {dof}")
    k = dof / 2.0
    tail = 1.0 - alpha
    upper = alpha > 0.5

    def below(x):
        # True while x is still left of the quantile
        if upper:
            return gammaincc(k, x / 2.0) > tail
        return gammainc(k, x / 2.0) < alpha

    lo, hi = 0.0, max(1.0, float(dof))
    while below(hi):
        lo, hi = hi, hi * 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if below(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True, eq=False)
class ConfidenceEllipsoid:
    center: np.ndarray
    shape: np.ndarray
    threshold: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "shape", np.asarray(self.shape, dtype=float))

    @classmethod
    def from_belief(cls, b: GaussianBelief, alpha: float) -> "ConfidenceEllipsoid":
        return cls(b.mean, b.cov, chi2_quantile(b.dim, alpha))

    @property
    def precision(self) -> np.ndarray:
        n = self.shape.shape[0]
        return np.linalg.inv(self.shape + REGULARIZATION * np.eye(n))

    def mahalanobis2(self, xs) -> np.ndarray:
        d = np.asarray(xs, dtype=float) - self.center
        return np.einsum("...i,ij,...j->...", d, self.precision, d)


def ellipsoid_membership(e: ConfidenceEllipsoid, x) -> bool:
    return bool(e.mahalanobis2(x) <= e.threshold)


@dataclass(frozen=True, eq=False)
class ReachableSpace:
    """Discrete states covered at decision step ``step``.

    ``cells`` holds sorted flat indices; ``states`` gives (i, j) tuples.
    """

    step: int
    cells: np.ndarray
    grid: Grid
    source: str = "policy"

    @property
    def states(self) -> set[tuple[int, int]]:
        return {self.grid.unflat(c) for c in self.cells}

    def __len__(self) -> int:
        return len(self.cells)

    def __contains__(self, s) -> bool:
        idx = self.grid.flat(s) if isinstance(s, tuple) else int(s)
        pos = np.searchsorted(self.cells, idx)
        return pos < len(self.cells) and self.cells[pos] == idx


def _free(grid: Grid, free_mask) -> np.ndarray:
    if free_mask is None:
        return np.ones(grid.n_cells, dtype=bool)
    return free_mask


def nearest_free_cell(x, grid: Grid, free_mask=None, cov=None) -> int:
    """Free cell whose center is closest to ``x`` in the Mahalanobis metric of
    ``cov`` (Euclidean when omitted); the cell containing ``x`` wins ties."""
    free = _free(grid, free_mask)
    x = np.asarray(x, dtype=float)
    idx = int(discretize_flat(x, grid))
    cand = np.flatnonzero(free)
    if cand.size == 0:
        raise ValueError("grid has no free cells")
    d = grid.centers[cand] - x
    if cov is None:
        m2 = np.sum(d * d, axis=1)
    else:
        prec = np.linalg.inv(np.asarray(cov, dtype=float) + REGULARIZATION * np.eye(2))
        m2 = np.einsum("ni,ij,nj->n", d, prec, d)
    best = m2.min()
    if free[idx]:
        own = m2[np.searchsorted(cand, idx)]
        if own <= best * (1 + 1e-12) + 1e-300:
            return idx
    return int(cand[np.argmin(m2)])


def ellipsoid_cells(mean, cov, threshold: float, grid: Grid, free_mask=None) -> np.ndarray:
    """Sorted flat indices of free cells whose centers lie in the ellipsoid,
    or the singleton free cell of least Mahalanobis distance when none do."""
    mean = np.asarray(mean, dtype=float)
    shape = np.asarray(cov, dtype=float) + REGULARIZATION * np.eye(2)
    prec = np.linalg.inv(shape)
    half = np.sqrt(threshold * np.clip(np.diag(shape), 0.0, None))
    h = grid.cell_size
    o = np.asarray(grid.origin)
    nx, ny = grid.shape
    lo = np.ceil((mean - half - o) / h - 0.5).astype(int)
    hi = np.floor((mean + half - o) / h - 0.5).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, [nx - 1, ny - 1])
    if np.all(hi >= lo):
        ii = np.arange(lo[0], hi[0] + 1)
        jj = np.arange(lo[1], hi[1] + 1)
        flat = (ii[:, None] * ny + jj[None, :]).ravel()
        d = grid.centers[flat] - mean
        m2 = np.einsum("ni,ij,nj->n", d, prec, d)
        flat = flat[m2 <= threshold]
        if free_mask is not None:
            flat = flat[free_mask[flat]]
        if flat.size:
            return np.sort(flat)
    return np.array([nearest_free_cell(mean, grid, free_mask, cov)], dtype=np.int64)


def reachable_states(b: GaussianBelief, alpha: float, grid: Grid, free_mask=None,
                     step: int = 0, source: str = "policy") -> ReachableSpace:
    cells = ellipsoid_cells(b.mean, b.cov, chi2_quantile(2, alpha), grid, free_mask)
    return ReachableSpace(step, cells, grid, source)


def reachable_space_of_actions(b_k: GaussianBelief, actions: np.ndarray, t_k: float,
                               dynamics, noise_cov, alpha: float, grid: Grid,
                               free_mask=None, step: int = 0,
                               sigma: SigmaSet | None = None,
                               ut_params: UTParams = UTParams()):
    """Union over actions of the per-action reachable spaces at step k+1.

    Every sigma point of ``b_k`` takes the same action. Returns the union
    and a list of per-action beliefs in action-index order.
    """
    if sigma is None:
        sigma = sigma_points(b_k, ut_params)
    beliefs = []
    parts = []
    for a in np.asarray(actions, dtype=float):
        b = ut_predict(b_k, a, t_k, dynamics, noise_cov, ut_params, sigma=sigma)
        beliefs.append(b)
        parts.append(reachable_states(b, alpha, grid, free_mask, step + 1, "action").cells)
    union = np.unique(np.concatenate(parts))
    return ReachableSpace(step + 1, union, grid, "union"), beliefs


def union_of_ellipsoids(means: np.ndarray, covs: np.ndarray, threshold: float, grid: Grid,
                        free_mask=None, chunk: int = 4096) -> np.ndarray:
    """Vectorized union of ``ellipsoid_cells`` over many 2-D beliefs."""
    means = np.asarray(means, dtype=float).reshape(-1, 2)
    covs = np.asarray(covs, dtype=float).reshape(-1, 2, 2)
    shapes = covs + REGULARIZATION * np.eye(2)
    det = shapes[:, 0, 0] * shapes[:, 1, 1] - shapes[:, 0, 1] * shapes[:, 1, 0]
    prec = np.empty_like(shapes)
    prec[:, 0, 0] = shapes[:, 1, 1] / det
    prec[:, 1, 1] = shapes[:, 0, 0] / det
    prec[:, 0, 1] = -shapes[:, 0, 1] / det
    prec[:, 1, 0] = -shapes[:, 1, 0] / det
    h = grid.cell_size
    o = np.asarray(grid.origin)
    nx, ny = grid.shape
    half = np.sqrt(threshold * np.stack([shapes[:, 0, 0], shapes[:, 1, 1]], axis=-1))
    width = int(np.ceil(2 * half.max() / h)) + 2
    offs = np.arange(width)
    seen = np.zeros(grid.n_cells, dtype=bool)
    for start in range(0, means.shape[0], chunk):
        m = means[start:start + chunk]
        p = prec[start:start + chunk]
        lo = np.ceil((m - half[start:start + chunk] - o) / h - 0.5).astype(np.int64)
        ii = lo[:, 0:1, None] + offs[None, :, None]          # (b, w, 1)
        jj = lo[:, 1:2, None] + offs[None, None, :]          # (b, 1, w)
        cx = o[0] + (ii + 0.5) * h - m[:, 0, None, None]
        cy = o[1] + (jj + 0.5) * h - m[:, 1, None, None]
        m2 = (p[:, 0, 0, None, None] * cx * cx + 2 * p[:, 0, 1, None, None] * cx * cy
              + p[:, 1, 1, None, None] * cy * cy)
        inside = (m2 <= threshold) & (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
        flat = np.broadcast_to(ii * ny + jj, inside.shape)
        if free_mask is not None:
            inside &= free_mask[np.clip(flat, 0, grid.n_cells - 1)]
        seen[flat[inside]] = True
        empty = ~inside.reshape(inside.shape[0], -1).any(axis=1)
        for row in np.flatnonzero(empty):
            seen[nearest_free_cell(m[row], grid, free_mask, covs[start + row])] = True
    return np.flatnonzero(seen)

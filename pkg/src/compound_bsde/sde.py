"""Risk-neutral multi-asset GBM and its Euler-Maruyama simulation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit, prange
from .errors import CholeskyFailure, InvalidCorrelation, ShapeMismatch, ValidationError
from .grid import TimeGrid

log = logging.getLogger(__name__)

CLAMP_FLOOR = 1e-12
# paths per independent RNG stream; fixed so output never depends on threading
PATH_CHUNK = 4096


@dataclass(frozen=True)
class GbmModel:
    """``dX = diag(X)((r 1 - q) dt + Sigma dW)`` with ``d<W^i, W^j> = corr_ij dt``."""

    r: float
    q: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    x0: np.ndarray

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        d = x0.size
        q = np.broadcast_to(np.asarray(self.q, dtype=float), (d,)).copy()
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = np.eye(d) * float(sigma)
        elif sigma.ndim == 1:
            sigma = np.diag(np.broadcast_to(sigma, (d,)))
        corr = np.eye(d) if self.corr is None else np.asarray(self.corr, dtype=float)
        if sigma.shape != (d, d) or corr.shape != (d, d):
            raise ShapeMismatch(f"sigma and corr must be {d}x{d}")
        if np.any(x0 <= 0):
            raise ValidationError("spot entries must be positive")
        if np.any(sigma < 0):
            raise ValidationError("volatility entries must be non-negative")
        if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0, atol=1e-12):
            raise InvalidCorrelation("correlation must be symmetric with unit diagonal")
        for name, value in (("x0", x0), ("q", q), ("sigma", sigma), ("corr", corr)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def isotropic(cls, dim: int, r: float, q: float, vol: float, x0: float, corr=None) -> "GbmModel":
        return cls(r=r, q=np.full(dim, q), sigma=np.eye(dim) * vol, corr=corr, x0=np.full(dim, x0))

    @property
    def dim(self) -> int:
        return self.x0.size

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.sigma == np.diag(np.diag(self.sigma))))

    @property
    def vols(self) -> np.ndarray:
        """Per-asset total volatility ``sqrt((Sigma corr Sigma^T)_ii)``."""
        return np.sqrt(np.diag(self.sigma @ self.corr @ self.sigma.T))

    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.corr)
        except np.linalg.LinAlgError:
            pass
        # PSD but singular: any A with A A^T = corr will do
        w, v = np.linalg.eigh(self.corr)
        if w.min() < -1e-10:
            raise CholeskyFailure("correlation matrix is not positive semi-definite")
        return v * np.sqrt(np.clip(w, 0.0, None))

    def diffusion(self, x: np.ndarray) -> np.ndarray:
        """``sigma(t, x) = diag(x) Sigma`` for a batch ``x`` of shape ``(B, d)``."""
        return x[:, :, None] * self.sigma[None, :, :]


@dataclass(frozen=True)
class PathBatch:
    states: np.ndarray  # (B, N+1, d)
    increments: np.ndarray  # (B, N, d) correlated Brownian increments
    seed: int
    n_clamped: int = 0
    grid: TimeGrid | None = field(default=None, compare=False)

    @property
    def batch(self) -> int:
        return self.states.shape[0]


def _normalize_seed(seed: int) -> int:
    return int(seed) & 0xFFFF_FFFF_FFFF_FFFF


def brownian_increments(
    model: GbmModel, grid: TimeGrid, batch: int, seed: int
) -> np.ndarray:
    """Correlated increments ``L xi sqrt(h)``, one Philox stream per path chunk."""
    if batch < 1:
        raise ValidationError("batch must be >= 1")
    lower = model.cholesky()
    n, d = grid.n_steps, model.dim
    root = np.random.SeedSequence(_normalize_seed(seed))
    out = np.empty((batch, n, d))
    for c, start in enumerate(range(0, batch, PATH_CHUNK)):
        stop = min(start + PATH_CHUNK, batch)
        child = np.random.SeedSequence(root.entropy, spawn_key=(c,))
        rng = np.random.Generator(np.random.Philox(child))
        xi = rng.standard_normal((stop - start, n, d))
        out[start:stop] = xi @ (lower.T * np.sqrt(grid.h))
    return out


@njit(parallel=True)
def _euler_numba(x0, drift, sigma, half_var, dw, h, log_euler, out):
    batch, n, d = dw.shape
    clamped = 0
    for b in prange(batch):
        local = 0
        for k in range(d):
            out[b, 0, k] = x0[k]
        for i in range(n):
            for k in range(d):
                shock = 0.0
                for m in range(d):
                    shock += sigma[k, m] * dw[b, i, m]
                x = out[b, i, k]
                if log_euler:
                    nxt = x * np.exp((drift[k] - half_var[k]) * h + shock)
                else:
                    nxt = x + x * (drift[k] * h + shock)
                if nxt < 1e-12:
                    nxt = 1e-12
                    local += 1
                out[b, i + 1, k] = nxt
        clamped += local
    return clamped


def _euler_numpy(x0, drift, sigma, half_var, dw, h, log_euler, out):
    batch, n, d = dw.shape
    out[:, 0, :] = x0
    clamped = 0
    for i in range(n):
        shock = dw[:, i, :] @ sigma.T
        x = out[:, i, :]
        if log_euler:
            nxt = x * np.exp((drift - half_var) * h + shock)
        else:
            nxt = x + x * (drift * h + shock)
        low = nxt < CLAMP_FLOOR
        clamped += int(low.sum())
        out[:, i + 1, :] = np.where(low, CLAMP_FLOOR, nxt)
    return clamped


euler_kernel = _accel.dispatch(_euler_numba, _euler_numpy)


def euler_paths(
    model: GbmModel, grid: TimeGrid, increments: np.ndarray, log_euler: bool = False
) -> tuple[np.ndarray, int]:
    batch, n, d = increments.shape
    if n != grid.n_steps or d != model.dim:
        raise ShapeMismatch(f"increments {increments.shape} do not match grid/model")
    out = np.empty((batch, n + 1, d))
    drift = model.r - model.q
    half_var = 0.5 * model.vols**2
    # sigma acts on the correlated increments; correlation is already inside dw
    clamped = euler_kernel(
        model.x0, drift, np.ascontiguousarray(model.sigma), half_var, np.ascontiguousarray(increments),
        grid.h, bool(log_euler), out,
    )
    return out, int(clamped)


def simulate_forward(
    model: GbmModel, grid: TimeGrid, batch: int, seed: int, log_euler: bool = False
) -> PathBatch:
    """Simulate ``batch`` Euler paths of the GBM on ``grid``; bit-reproducible in ``seed``."""
    dw = brownian_increments(model, grid, batch, seed)
    states, clamped = euler_paths(model, grid, dw, log_euler=log_euler)
    if clamped:
        log.warning("clamped %d negative Euler states to %g", clamped, CLAMP_FLOOR)
    states.setflags(write=False)
    dw.setflags(write=False)
    return PathBatch(states=states, increments=dw, seed=int(seed), n_clamped=clamped, grid=grid)


def exact_paths(model: GbmModel, grid: TimeGrid, increments: np.ndarray) -> np.ndarray:
    """Closed-form GBM solution at the grid points driven by the same increments."""
    batch, n, d = increments.shape
    w = np.concatenate([np.zeros((batch, 1, d)), np.cumsum(increments, axis=1)], axis=1)
    var = np.diag(model.sigma @ model.corr @ model.sigma.T)
    drift = model.r - model.q - 0.5 * var
    t = grid.times[None, :, None]
    return model.x0 * np.exp(drift * t + w @ model.sigma.T)

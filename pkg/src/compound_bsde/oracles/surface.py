"""Stage-consistent reference values ``(Y, Z)`` along paths.

A surface is called as ``surface(j, t, x)`` with ``x`` of shape ``(B, d1)``
and returns ``Y`` of shape ``(B, 1)`` and ``Z`` of shape ``(B, 1, d1)``.  On
stage ``j`` the value at the stage end ``T_j`` is the compounding target
``g_j(x, Y_{j+1}(T_j, x))``; before it, the stage's own continuation value.
Surfaces also expose ``initial_value``/``z_value`` so they can stand in for
trained networks in the error metrics.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _accel
from .._accel import njit
from ..errors import OutOfDomain, ValidationError
from ..sde import GbmModel
from .bermudan import BasketReduction, reduce_geobasket
from .blackscholes import bs_price_delta
from .compound import MFOLD_CDF, _chain_price, geske_critical_level, geske_quote, mfold_critical_levels

_TIME_EPS = 1e-12


class _Surface:
    times: list[float]
    vol: float

    def stage_start(self, j: int) -> float:
        return 0.0 if j == 0 else self.times[j - 1]

    def _check(self, j, t):
        if not 0 <= j < len(self.times):
            raise OutOfDomain(f"stage {j} out of range")
        if not self.stage_start(j) - _TIME_EPS <= t <= self.times[j] + _TIME_EPS:
            raise OutOfDomain(f"t = {t} outside stage {j}")

    def _pack(self, x, value, delta):
        x1 = x[:, 0]
        return value[:, None], (delta * self.vol * x1)[:, None, None]

    def initial_value(self, j: int, x: np.ndarray) -> np.ndarray:
        return self(j, self.stage_start(j), x)[0]

    def z_value(self, j: int, t, x: np.ndarray) -> np.ndarray:
        return self(j, float(t), x)[1]


def _scalar_model(model: GbmModel) -> tuple[float, float, float]:
    if model.dim != 1:
        raise ValidationError("this surface needs a one-dimensional model")
    return model.r, float(model.q[0]), float(model.sigma[0, 0])


class EuropeanSurface(_Surface):
    """Vanilla option split into passthrough stages: Black-Scholes on every stage."""

    def __init__(self, kind: str, K: float, T: float, model: GbmModel, n_stages: int = 1):
        self.kind, self.K = kind, float(K)
        self.r, self.q, self.vol = _scalar_model(model)
        self.times = [T * (j + 1) / n_stages for j in range(n_stages)]
        self.T = float(T)

    def __call__(self, j, t, x):
        self._check(j, t)
        x = np.asarray(x, dtype=float)
        v, d = bs_price_delta(self.kind, min(t, self.T), x[:, 0], self.K, self.T, self.r, self.q, self.vol)
        return self._pack(x, np.asarray(v), np.asarray(d))


class PlainCompoundSurface(_Surface):
    """Geske value on stage 0, the inner Black-Scholes value on stage 1."""

    def __init__(self, outer: str, inner: str, K1: float, K2: float, T1: float, T2: float,
                 model: GbmModel):
        self.outer, self.inner = outer, inner
        self.K1, self.K2, self.T1, self.T2 = float(K1), float(K2), float(T1), float(T2)
        self.r, self.q, self.vol = _scalar_model(model)
        self.times = [self.T1, self.T2]
        self.kstar = geske_critical_level(inner, self.K1, self.K2, self.T1, self.T2, self.r, self.q, self.vol)

    def _inner(self, t, x1):
        v, d = bs_price_delta(self.inner, t, x1, self.K2, self.T2, self.r, self.q, self.vol)
        return np.asarray(v), np.asarray(d)

    def __call__(self, j, t, x):
        self._check(j, t)
        x = np.asarray(x, dtype=float)
        x1 = x[:, 0]
        if j == 1:
            return self._pack(x, *self._inner(min(t, self.T2), x1))
        if t >= self.T1 - _TIME_EPS:
            v, d = self._inner(self.T1, x1)
            if self.outer == "call":
                return self._pack(x, np.maximum(v - self.K1, 0.0), d * (v >= self.K1))
            return self._pack(x, np.maximum(self.K1 - v, 0.0), -d * (v < self.K1))
        quote = geske_quote(self.outer, self.inner, t, x1, self.K1, self.K2, self.T1, self.T2,
                            self.r, self.q, self.vol)
        return self._pack(x, np.asarray(quote.price), np.asarray(quote.delta))


class MfoldSurface(_Surface):
    """Remaining call chain on every stage; delta by central difference."""

    def __init__(self, strikes, times, model: GbmModel, cfg=MFOLD_CDF):
        self.strikes = [float(k) for k in strikes]
        self.times = [float(s) for s in times]
        self.r, self.q, self.vol = _scalar_model(model)
        self.cfg = cfg
        self.kstars = mfold_critical_levels(self.strikes, self.times, self.r, self.q, self.vol, cfg)

    def _chain(self, j, t, x1):
        args = (self.times[j:], self.strikes[j:], self.kstars[j:], self.r, self.q, self.vol, self.cfg)
        step = 1e-4 * x1
        v = _chain_price(t, x1, *args)
        d = (_chain_price(t, x1 + step, *args) - _chain_price(t, x1 - step, *args)) / (2.0 * step)
        return v, d

    def __call__(self, j, t, x):
        self._check(j, t)
        x = np.asarray(x, dtype=float)
        x1 = x[:, 0]
        M = len(self.times)
        if t >= self.times[j] - _TIME_EPS:
            if j == M - 1:
                return self._pack(x, np.maximum(x1 - self.strikes[-1], 0.0), (x1 > self.strikes[-1]) * 1.0)
            v, d = self._chain(j + 1, self.times[j], x1)
            return self._pack(x, np.maximum(v - self.strikes[j], 0.0), d * (v >= self.strikes[j]))
        return self._pack(x, *self._chain(j, t, x1))


# -- Bermudan basket: dense lattice on the reduced model ----------------------------

@njit
def _lattice_numba(l0, dl, half, n, K, p, disc, ex_mask, rec_layer, rec_pre, rec_post):
    width = half + n
    V = np.empty(2 * width + 1)
    W = np.empty(2 * width + 1)
    for k in range(2 * width + 1):
        V[k] = max(K - math.exp(l0 + (k - width) * dl), 0.0)
    slot = rec_layer.size - 1
    if rec_layer[slot] == n:
        for k in range(2 * half + 1):
            rec_pre[slot, k] = V[k + n]
            rec_post[slot, k] = V[k + n]
        slot -= 1
    for i in range(n - 1, -1, -1):
        # layer i spans offsets -(half + i) .. half + i; old array is one wider each side
        m = 2 * (half + i) + 1
        for k in range(m):
            W[k] = disc * (p * V[k + 2] + (1.0 - p) * V[k])
        for k in range(m):
            V[k] = W[k]
        if slot >= 0 and rec_layer[slot] == i:
            for k in range(2 * half + 1):
                rec_pre[slot, k] = V[k + i]
        if ex_mask[i]:
            w = half + i
            for k in range(m):
                V[k] = max(V[k], K - math.exp(l0 + (k - w) * dl))
        if slot >= 0 and rec_layer[slot] == i:
            for k in range(2 * half + 1):
                rec_post[slot, k] = V[k + i]
            slot -= 1


def _lattice_numpy(l0, dl, half, n, K, p, disc, ex_mask, rec_layer, rec_pre, rec_post):
    width = half + n
    offs = np.arange(-width, width + 1)
    V = np.maximum(K - np.exp(l0 + offs * dl), 0.0)
    slot = rec_layer.size - 1
    if rec_layer[slot] == n:
        rec_pre[slot] = V[n:n + 2 * half + 1]
        rec_post[slot] = rec_pre[slot]
        slot -= 1
    for i in range(n - 1, -1, -1):
        V = disc * (p * V[2:] + (1.0 - p) * V[:-2])
        hit = slot >= 0 and rec_layer[slot] == i
        if hit:
            rec_pre[slot] = V[i:i + 2 * half + 1]
        if ex_mask[i]:
            w = half + i
            V = np.maximum(V, K - np.exp(l0 + np.arange(-w, w + 1) * dl))
        if hit:
            rec_post[slot] = V[i:i + 2 * half + 1]
            slot -= 1


_lattice_kernel = _accel.dispatch(_lattice_numba, _lattice_numpy)


class BermudanBasketSurface(_Surface):
    """Bermudan geometric-basket put from a recombining lattice on the reduced GBM.

    The lattice is computed over the full log-price band (both node parities),
    so every solver grid time has values on a fixed uniform log grid; values
    and log-derivatives are interpolated linearly in ``log x``.
    """

    def __init__(self, strike: float, exercise_dates, model: GbmModel, grid_times,
                 min_tree_steps: int = 10_000, n_std: float = 8.0):
        self.model = model
        self.red: BasketReduction = reduce_geobasket(model)
        self.K = float(strike)
        self.times = [float(s) for s in exercise_dates]
        grid_times = np.asarray(grid_times, dtype=float)
        T = self.times[-1]
        N = grid_times.size - 1
        sub = max(1, math.ceil(min_tree_steps / N))
        n = N * sub
        dt = T / n
        dl = self.red.sigma * math.sqrt(dt)
        half = int(math.ceil(n_std * self.red.sigma * math.sqrt(T) / dl)) + 2
        u = math.exp(dl)
        p = (math.exp((self.red.r - self.red.q) * dt) - 1.0 / u) / (u - 1.0 / u)
        ex_mask = np.zeros(n + 1, dtype=np.bool_)
        for s in self.times[:-1]:
            ex_mask[int(round(s / dt))] = True
        rec = np.arange(N + 1, dtype=np.int64) * sub
        self.pre = np.empty((N + 1, 2 * half + 1))
        self.post = np.empty((N + 1, 2 * half + 1))
        _lattice_kernel(math.log(self.red.x0), dl, half, n, self.K, p, math.exp(-self.red.r * dt),
                        ex_mask, rec, self.pre, self.post)
        self.grid_times = grid_times
        self.l0, self.dl, self.half = math.log(self.red.x0), dl, half
        self.tree_steps = n
        self.log_grid = self.l0 + np.arange(-half, half + 1) * dl
        # u(x) = V(geomean x) gives x_k du/dx_k = V'(l) / d, hence Z = V'(l) 1^T Sigma / d
        self.z_weights = np.ones(model.dim) @ model.sigma / model.dim

    def _slice(self, t):
        i = int(round(t / (self.grid_times[1] - self.grid_times[0])))
        if abs(self.grid_times[min(i, self.grid_times.size - 1)] - t) > 1e-9:
            raise OutOfDomain(f"t = {t} is not a lattice time")
        return i

    def _interp(self, row, lx):
        lo, hi = self.log_grid[1], self.log_grid[-2]
        if np.any(lx < lo) or np.any(lx > hi):
            raise OutOfDomain("state outside the lattice band")
        v = np.interp(lx, self.log_grid, row)
        dv = np.empty_like(row)
        dv[1:-1] = (row[2:] - row[:-2]) / (2.0 * self.dl)
        dv[0], dv[-1] = dv[1], dv[-2]
        return v, np.interp(lx, self.log_grid, dv)

    def __call__(self, j, t, x):
        self._check(j, t)
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise OutOfDomain("non-positive state")
        lx = np.mean(np.log(x), axis=1)
        i = self._slice(t)
        at_end = t >= self.times[j] - _TIME_EPS
        v, dv = self._interp(self.post[i] if at_end else self.pre[i], lx)
        return v[:, None], (dv[:, None] * self.z_weights[None, :])[:, None, :]

    def price(self) -> float:
        return float(self.pre[0, self.half])


def reference_surface(problem: str, **params):
    """Factory: ``plain_compound``, ``mfold``, ``bermudan_basket`` or ``european``."""
    if problem == "plain_compound":
        return PlainCompoundSurface(**params)
    if problem == "mfold":
        return MfoldSurface(**params)
    if problem == "bermudan_basket":
        return BermudanBasketSurface(**params)
    if problem == "european":
        return EuropeanSurface(**params)
    raise ValidationError(f"no reference surface for problem {problem!r}")

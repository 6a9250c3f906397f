"""Geometric-basket reduction and a CRR binomial tree for Bermudan puts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import _accel
from .._accel import njit
from ..errors import DateMappingCollision, NonDiagonalSigma, ValidationError
from ..sde import GbmModel


@dataclass(frozen=True)
class BasketReduction:
    """One-dimensional GBM followed by the geometric mean of the assets."""

    x0: float
    r: float
    q: float
    sigma: float
    dim: int = 1

    def to_dict(self) -> dict:
        return {"x0": self.x0, "r": self.r, "q": self.q, "sigma": self.sigma, "dim": self.dim}


def reduce_geobasket(model: GbmModel) -> BasketReduction:
    if not model.is_diagonal:
        raise NonDiagonalSigma("the geometric-basket reduction needs a diagonal volatility matrix")
    d = model.dim
    s = np.diag(model.sigma)
    var = float(s @ model.corr @ s) / d ** 2
    q_hat = float(np.mean(model.q + 0.5 * s ** 2)) - 0.5 * var
    x0_hat = float(np.exp(np.mean(np.log(model.x0))))
    return BasketReduction(x0=x0_hat, r=model.r, q=q_hat, sigma=math.sqrt(var), dim=d)


def per_asset_delta(delta_hat: float, reduction: BasketReduction, x0: np.ndarray) -> np.ndarray:
    """Chain rule through the geometric mean: ``d xhat / d x_i = xhat / (d x_i)``."""
    return delta_hat * reduction.x0 / (reduction.dim * np.asarray(x0, dtype=float))


@dataclass(frozen=True)
class TreeConfig:
    steps: int = 10_000
    exercise_dates: tuple = field(default=())

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ValidationError("tree needs at least one step")
        object.__setattr__(self, "exercise_dates", tuple(float(t) for t in self.exercise_dates))


def exercise_layers(dates, maturity: float, steps: int) -> np.ndarray:
    """Nearest tree layer of each exercise date; distinct dates must map to distinct layers."""
    dt = maturity / steps
    layers = []
    for t in dates:
        if not 0.0 < t <= maturity + 1e-12:
            raise ValidationError(f"exercise date {t} outside (0, {maturity}]")
        layers.append(int(round(t / dt)))
    if len(set(layers)) != len(layers):
        raise DateMappingCollision(f"{steps} steps map two exercise dates to one layer")
    return np.array(layers, dtype=np.int64)


@njit
def _tree_numba(s0, K, u, p, disc, steps, ex_mask):
    lu = math.log(u)
    ls = math.log(s0)
    V = np.empty(steps + 1)
    for j in range(steps + 1):
        V[j] = max(K - math.exp(ls + (2 * j - steps) * lu), 0.0)
    v_dn = 0.0
    v_up = 0.0
    for i in range(steps - 1, -1, -1):
        for j in range(i + 1):
            V[j] = disc * (p * V[j + 1] + (1.0 - p) * V[j])
        if ex_mask[i]:
            for j in range(i + 1):
                V[j] = max(V[j], K - math.exp(ls + (2 * j - i) * lu))
        if i == 1:
            v_dn = V[0]
            v_up = V[1]
    return V[0], v_dn, v_up


def _tree_numpy(s0, K, u, p, disc, steps, ex_mask):
    lu, ls = math.log(u), math.log(s0)
    V = np.maximum(K - np.exp(ls + (2 * np.arange(steps + 1) - steps) * lu), 0.0)
    v_dn = v_up = 0.0
    for i in range(steps - 1, -1, -1):
        V = disc * (p * V[1:] + (1.0 - p) * V[:-1])
        if ex_mask[i]:
            V = np.maximum(V, K - np.exp(ls + (2 * np.arange(i + 1) - i) * lu))
        if i == 1:
            v_dn, v_up = V[0], V[1]
    return V[0], v_dn, v_up


_tree_kernel = _accel.dispatch(_tree_numba, _tree_numpy)


def binomial_bermudan_put(reduction: BasketReduction, K: float, exercise_dates,
                          cfg: TreeConfig = TreeConfig()) -> tuple[float, float]:
    """``(price, delta_hat)`` of a put exercisable on ``exercise_dates``; the last date is expiry.

    ``delta_hat`` is the first-layer difference quotient with respect to the
    reduced spot.  An empty tail of dates gives the European put.
    """
    dates = sorted(float(t) for t in exercise_dates)
    if not dates:
        raise ValidationError("need at least the expiry date")
    if K <= 0 or not reduction.sigma > 0:
        raise ValidationError("need K > 0 and a positive reduced volatility")
    T = dates[-1]
    n = int(cfg.steps)
    if n < 2:
        raise ValidationError("tree needs at least two steps for a delta")
    layers = exercise_layers(dates, T, n)
    dt = T / n
    u = math.exp(reduction.sigma * math.sqrt(dt))
    d = 1.0 / u
    p = (math.exp((reduction.r - reduction.q) * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValidationError("tree probabilities outside (0, 1); increase the step count")
    mask = np.zeros(n + 1, dtype=np.bool_)
    mask[layers] = True
    price, v_dn, v_up = _tree_kernel(float(reduction.x0), float(K), u, p, math.exp(-reduction.r * dt), n, mask)
    delta = (v_up - v_dn) / (reduction.x0 * (u - d))
    return float(price), float(delta)

"""Drivers and compounding/terminal conditions, evaluated on path batches.

Shapes: ``x`` is ``(B, d1)``, ``y`` is ``(B, d2)``, ``z`` is ``(B, d2, d1)``.
Each callable also exposes the vector-Jacobian products the solver needs for
its reverse pass.  Kinks use right derivatives; for ``max(y, e)`` a tie sends
the gradient to ``e``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, InvalidTimes, NonPositiveState, ValidationError
from .grid import TimeGrid, build_grid
from .sde import GbmModel


@dataclass(frozen=True)
class Driver:
    """Generator ``f(t, x, y, z)`` of one backward equation."""

    value: Callable
    vjp: Callable  # (t, x, y, z, adj) -> (adj_y, adj_z)
    lipschitz: dict = field(default_factory=dict)
    name: str = "driver"

    def __call__(self, t, x, y, z):
        return self.value(t, x, y, z)


def driver_discounting(r: float) -> Driver:
    """``f(t, x, y, z) = -r y``."""
    r = float(r)

    def value(t, x, y, z):
        return -r * y

    def vjp(t, x, y, z, adj):
        return -r * adj, None

    return Driver(value, vjp, {"x": 0.0, "y": abs(r), "z": 0.0}, name=f"discount(r={r})")


# -- exercise payoffs of the state ------------------------------------------------

def geometric_mean(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise NonPositiveState("geometric mean needs strictly positive states")
    return np.exp(np.mean(np.log(x), axis=-1))


def _require_scalar_state(x):
    if x.shape[-1] != 1:
        raise DimensionMismatch(f"payoff is defined for d1 = 1, got d1 = {x.shape[-1]}")


def exercise_call(K: float):
    def f(x):
        _require_scalar_state(x)
        return np.maximum(x - K, 0.0)
    return f


def exercise_put(K: float):
    def f(x):
        _require_scalar_state(x)
        return np.maximum(K - x, 0.0)
    return f


def exercise_geobasket_put(K: float):
    def f(x):
        return np.maximum(K - geometric_mean(x), 0.0)[:, None]
    return f


KINDS = ("passthrough", "call_on_value", "put_on_value", "bermudan_max", "terminal")


@dataclass(frozen=True)
class CompoundingCondition:
    """``g_j(x, y)`` for an intermediate stage, or ``g_M(x)`` when ``kind == "terminal"``."""

    kind: str
    strike: float | None = None
    exercise: Callable | None = None
    label: str = ""
    lipschitz: dict = field(default_factory=lambda: {"y": 1.0})

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown condition kind {self.kind!r}")
        if self.kind in ("bermudan_max", "terminal") and self.exercise is None:
            raise ValidationError(f"{self.kind} condition needs an exercise payoff")

    @property
    def is_terminal(self) -> bool:
        return self.kind == "terminal"

    def __call__(self, x, y=None):
        x = np.asarray(x, dtype=float)
        if self.kind == "terminal":
            return self.exercise(x)
        y = np.asarray(y, dtype=float)
        if self.kind == "passthrough":
            return y
        if self.kind == "call_on_value":
            return np.maximum(y - self.strike, 0.0)
        if self.kind == "put_on_value":
            return np.maximum(self.strike - y, 0.0)
        return np.maximum(y, self.exercise(x))

    def vjp_y(self, x, y, adj):
        """``adj * dg/dy`` (elementwise; every shipped kind is diagonal in ``y``)."""
        if self.kind == "terminal":
            return np.zeros_like(adj)
        if self.kind == "passthrough":
            return adj
        if self.kind == "call_on_value":
            return adj * (y >= self.strike)
        if self.kind == "put_on_value":
            return -adj * (y < self.strike)
        return adj * (y > self.exercise(np.asarray(x, dtype=float)))


def cond_passthrough() -> CompoundingCondition:
    return CompoundingCondition("passthrough", label="y")


def _check_strike(K):
    if K < 0:
        raise ValidationError("strike must be non-negative")
    return float(K)


def cond_call_on_value(K: float) -> CompoundingCondition:
    K = _check_strike(K)
    return CompoundingCondition("call_on_value", strike=K, label=f"(y-{K:g})+")


def cond_put_on_value(K: float) -> CompoundingCondition:
    K = _check_strike(K)
    return CompoundingCondition("put_on_value", strike=K, label=f"({K:g}-y)+")


def cond_bermudan_put_geobasket(K: float, terminal: bool = False) -> CompoundingCondition:
    if K <= 0:
        raise ValidationError("strike must be positive")
    ex = exercise_geobasket_put(float(K))
    if terminal:
        return CompoundingCondition("terminal", strike=float(K), exercise=ex,
                                    label=f"({K:g}-geomean(x))+", lipschitz={"y": 0.0})
    return CompoundingCondition("bermudan_max", strike=float(K), exercise=ex,
                                label=f"max(y, ({K:g}-geomean(x))+)")


def cond_bermudan_call(K: float, terminal: bool = False) -> CompoundingCondition:
    K = _check_strike(K)
    if terminal:
        return terminal_call(K)
    return CompoundingCondition("bermudan_max", strike=K, exercise=exercise_call(K),
                                label=f"max(y, (x-{K:g})+)", lipschitz={"x": 1.0, "y": 1.0})


def terminal_call(K: float) -> CompoundingCondition:
    K = _check_strike(K)
    return CompoundingCondition("terminal", strike=K, exercise=exercise_call(K),
                                label=f"(x-{K:g})+", lipschitz={"x": 1.0, "y": 0.0})


def terminal_put(K: float) -> CompoundingCondition:
    K = _check_strike(K)
    return CompoundingCondition("terminal", strike=K, exercise=exercise_put(K),
                                label=f"({K:g}-x)+", lipschitz={"x": 1.0, "y": 0.0})


@dataclass(frozen=True)
class CompoundSpec:
    """One pricing problem: ``M`` stages sharing the forward GBM."""

    grid: TimeGrid
    model: GbmModel
    drivers: tuple[Driver, ...]
    conditions: tuple[CompoundingCondition, ...]
    value_dim: int = 1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "drivers", tuple(self.drivers))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        m = self.grid.n_stages
        if len(self.drivers) != m or len(self.conditions) != m:
            raise ValidationError(f"need {m} drivers and conditions, got "
                                  f"{len(self.drivers)} and {len(self.conditions)}")
        if not self.conditions[-1].is_terminal:
            raise ValidationError("the last condition must be terminal")
        if any(c.is_terminal for c in self.conditions[:-1]):
            raise ValidationError("only the last condition may be terminal")

    @property
    def n_stages(self) -> int:
        return self.grid.n_stages


def _vanilla_terminal(kind: str, K: float) -> CompoundingCondition:
    if kind == "call":
        return terminal_call(K)
    if kind == "put":
        return terminal_put(K)
    raise ValidationError(f"option kind must be 'call' or 'put', got {kind!r}")


def build_spec_plain_compound(outer: str, inner: str, K1: float, K2: float, T1: float, T2: float,
                              model: GbmModel, steps: int) -> CompoundSpec:
    """Two-stage compound option: ``outer`` written on an ``inner`` vanilla."""
    if not 0 < T1 < T2:
        raise InvalidTimes(f"need 0 < T1 < T2, got T1={T1}, T2={T2}")
    if outer == "call":
        first = cond_call_on_value(K1)
    elif outer == "put":
        first = cond_put_on_value(K1)
    else:
        raise ValidationError(f"outer must be 'call' or 'put', got {outer!r}")
    grid = build_grid(T2, [T1, T2], steps)
    drivers = [driver_discounting(model.r)] * 2
    return CompoundSpec(grid, model, drivers, [first, _vanilla_terminal(inner, K2)],
                        name=f"{outer}-on-{inner}")


def build_spec_european(kind: str, K: float, T: float, model: GbmModel, steps: int,
                        n_stages: int = 1) -> CompoundSpec:
    """Vanilla option; with ``n_stages > 1`` the extra stages are passthrough."""
    times = [T * (j + 1) / n_stages for j in range(n_stages)]
    grid = build_grid(T, times, steps)
    conds = [cond_passthrough() for _ in range(n_stages - 1)] + [_vanilla_terminal(kind, K)]
    return CompoundSpec(grid, model, [driver_discounting(model.r)] * n_stages, conds,
                        name=f"european-{kind}-M{n_stages}")


def build_spec_mfold(strikes, times, model: GbmModel, steps: int) -> CompoundSpec:
    """M-fold compound call: call on call on ... on a vanilla call."""
    strikes = [float(k) for k in strikes]
    times = [float(t) for t in times]
    if len(strikes) != len(times):
        raise ValidationError("need one strike per exercise time")
    grid = build_grid(times[-1], times, steps)
    conds = [cond_call_on_value(k) for k in strikes[:-1]] + [terminal_call(strikes[-1])]
    return CompoundSpec(grid, model, [driver_discounting(model.r)] * len(times), conds,
                        name=f"mfold-M{len(times)}")


def build_spec_bermudan_basket(strike: float, exercise_dates, model: GbmModel,
                               steps: int) -> CompoundSpec:
    """Bermudan put on the geometric average, exercisable at every ``exercise_dates`` entry."""
    dates = [float(t) for t in exercise_dates]
    grid = build_grid(dates[-1], dates, steps)
    conds = [cond_bermudan_put_geobasket(strike) for _ in dates[:-1]]
    conds.append(cond_bermudan_put_geobasket(strike, terminal=True))
    return CompoundSpec(grid, model, [driver_discounting(model.r)] * len(dates), conds,
                        name=f"bermudan-geobasket-d{model.dim}")

"""Uniform time grids split into stages at the compounding dates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NoCommonStep, NonMonotoneTimes, OutOfRange

_REL_TOL = 1e-12
_INT_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Partition of ``[0, maturity]`` with ``steps_per_stage[j]`` steps on stage ``j``.

    Stage ``j`` (0-based) runs over ``[T_{j-1}, T_j]`` with ``T_{-1} = 0``.  All
    stages share the step ``h``, so every compounding date is a grid point.
    """

    maturity: float
    compounding_times: tuple[float, ...]
    steps_per_stage: tuple[int, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.compounding_times)
        steps = tuple(int(n) for n in self.steps_per_stage)
        object.__setattr__(self, "compounding_times", times)
        object.__setattr__(self, "steps_per_stage", steps)
        _check_times(float(self.maturity), times)
        if len(steps) != len(times):
            raise NoCommonStep("need one step count per stage")
        if any(n < 1 for n in steps):
            raise NoCommonStep("every stage needs at least one step")
        lengths = np.diff((0.0,) + times)
        h = lengths / np.asarray(steps, dtype=float)
        if np.any(np.abs(h - h[0]) > _REL_TOL * h[0]):
            raise NoCommonStep(f"per-stage steps {h.tolist()} are not equal")

    @property
    def n_stages(self) -> int:
        return len(self.steps_per_stage)

    @property
    def n_steps(self) -> int:
        return sum(self.steps_per_stage)

    @property
    def h(self) -> float:
        return self.maturity / self.n_steps

    @cached_property
    def boundaries(self) -> tuple[int, ...]:
        """Grid index of every stage boundary, ``(0, N_1, N_1+N_2, ..., N)``."""
        out = [0]
        for n in self.steps_per_stage:
            out.append(out[-1] + n)
        return tuple(out)

    @cached_property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1, dtype=float) * self.h
        t[-1] = self.maturity
        return t

    def stage_slice(self, j: int) -> tuple[int, int]:
        """First and last grid index (inclusive) of stage ``j``."""
        return self.boundaries[j], self.boundaries[j + 1]

    def stage_start_time(self, j: int) -> float:
        return 0.0 if j == 0 else self.compounding_times[j - 1]


def _check_times(maturity: float, times) -> None:
    if not times:
        raise NonMonotoneTimes("at least one compounding time is required")
    prev = 0.0
    for t in times:
        if not t > prev:
            raise NonMonotoneTimes(f"compounding times must increase strictly from 0: {list(times)}")
        prev = t
    if abs(times[-1] - maturity) > _REL_TOL * max(1.0, maturity):
        raise NonMonotoneTimes("last compounding time must equal the maturity")


def build_grid(maturity: float, compounding_times, total_steps_hint: int) -> TimeGrid:
    """Smallest grid with at least ``total_steps_hint`` steps and a common step.

    Searches ``N`` in ``[hint, 4 * hint]`` for the first value that makes every
    stage length an integer multiple of ``maturity / N``.
    """
    times = tuple(float(t) for t in compounding_times)
    _check_times(float(maturity), times)
    if total_steps_hint < 1:
        raise NoCommonStep("total_steps_hint must be positive")
    fractions = np.diff((0.0,) + times) / maturity
    for n in range(int(total_steps_hint), 4 * int(total_steps_hint) + 1):
        raw = fractions * n
        counts = np.rint(raw)
        if np.all(np.abs(raw - counts) <= _INT_TOL * max(1.0, n)) and np.all(counts >= 1):
            return TimeGrid(float(maturity), times, tuple(int(c) for c in counts))
    raise NoCommonStep(
        f"no common step for stage lengths {np.diff((0.0,) + times).tolist()} "
        f"with N <= {4 * total_steps_hint}"
    )


def project(grid: TimeGrid, t: float) -> int:
    """Index ``i`` with ``t`` in ``[t_i, t_{i+1})``; ``t = T`` maps to ``N``."""
    if not (0.0 <= t <= grid.maturity * (1 + _REL_TOL)) or math.isnan(t):
        raise OutOfRange(f"t={t} outside [0, {grid.maturity}]")
    i = int(math.floor(t / grid.h + _INT_TOL))
    return min(i, grid.n_steps)

"""Discretization-time schedules for the reverse sampler.

Times are stored in remaining forward time: entry t means the sampler state
at that point has law ~= q_t, and the run walks the list downward from T to
the terminal smoothing level. Three rules are provided: uniform steps,
geometric times (step size proportional to remaining time), and the adaptive
rule h_k = (1 - e^{-2 t_k}) (T + log(1/gamma)) / N that keeps every step a
fixed fraction of the current smoothing variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    """Raised when a step-size rule cannot produce a valid schedule."""


@dataclass(frozen=True)
class Schedule:
    """A decreasing time grid T = times[0] > ... > times[-1] >= 0.

    Attributes:
        kind: One of "constant", "linear", "adaptive".
        T: Start time (largest smoothing level).
        gamma: Terminal smoothing target.
        n_requested: The step budget N handed to the generating rule.
        times: Decreasing array of remaining forward times, length steps+1.
    """

    kind: str
    T: float
    gamma: float
    n_requested: int
    times: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if self.times.ndim != 1 or self.times.shape[0] < 2:
            raise ScheduleError("schedule needs at least one step")
        if np.any(np.diff(self.times) >= 0):
            raise ScheduleError("times must be strictly decreasing")
        if self.times[0] != self.T:
            raise ScheduleError("times[0] must equal T")

    @property
    def steps(self) -> np.ndarray:
        """Step sizes h_k = t_k - t_{k+1}, all positive."""
        return -np.diff(self.times)

    @property
    def n_steps(self) -> int:
        return self.times.shape[0] - 1

    @property
    def terminal_time(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_ratio(self) -> float:
        """Terminal time over gamma; the adaptive rule keeps this in (0, 1]."""
        return self.terminal_time / self.gamma if self.gamma > 0 else math.nan

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "T": self.T,
            "gamma": self.gamma,
            "N_requested": self.n_requested,
            "times": [float(t) for t in self.times],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, spec: dict) -> "Schedule":
        return cls(spec["kind"], spec["T"], spec["gamma"], spec["N_requested"], np.asarray(spec["times"]))


def constant_schedule(T: float, gamma: float, N: int) -> Schedule:
    """Uniform steps from T down to gamma (gamma = 0 allowed)."""
    _validate_horizon(T, gamma, N, allow_zero_gamma=True)
    times = np.linspace(T, gamma, N + 1)
    times[0] = T
    times[-1] = gamma
    return Schedule("constant", T, gamma, N, times)


def linear_schedule(T: float, gamma: float, N: int) -> Schedule:
    """Step sizes proportional to remaining time: geometric decay of t_k.

    N steps land exactly on gamma, with t_{k+1}/t_k constant, so h_k/t_k is
    constant across k. Requires gamma > 0.
    """
    _validate_horizon(T, gamma, N, allow_zero_gamma=False)
    times = np.geomspace(T, gamma, N + 1)
    times[0] = T
    times[-1] = gamma
    return Schedule("linear", T, gamma, N, times)


def adaptive_schedule(T: float, gamma: float, N: int) -> Schedule:
    """Steps proportional to the smoothing variance 1 - e^{-2 t_k}.

    Iterates t_{k+1} = t_k - (1 - e^{-2 t_k}) (T + log(1/gamma)) / N from
    t_0 = T and stops at the first time at or below gamma. The realized step
    count is data (roughly N); the terminal time lands in (0, gamma] and is
    reported via terminal_ratio.
    """
    if T < 1:
        raise ScheduleError(f"adaptive rule needs T >= 1, got {T}")
    if not 0 < gamma < 1:
        raise ScheduleError(f"adaptive rule needs gamma in (0, 1), got {gamma}")
    budget = T + math.log(1.0 / gamma)
    if N < math.ceil(budget):
        raise ScheduleError(f"N={N} below the minimum ceil(T + log(1/gamma)) = {math.ceil(budget)}")
    rate = budget / N
    times = [T]
    while times[-1] > gamma:
        t = times[-1]
        h = -math.expm1(-2.0 * t) * rate
        if h >= t:
            raise ScheduleError(
                f"step {h:.3g} at t={t:.3g} would overshoot past zero; increase N (N={N})"
            )
        times.append(t - h)
    return Schedule("adaptive", T, gamma, N, np.array(times))


def kl_budget(schedule: Schedule) -> float:
    """Dimensionless discretization-budget proxy sum_k h_k / (1 - e^{-2 t_k}).

    Each term is the step size relative to the smoothing variance at the
    step's start; the adaptive rule makes every term exactly
    (T + log(1/gamma)) / N.
    """
    starts = schedule.times[:-1]
    return float(np.sum(schedule.steps / (-np.expm1(-2.0 * starts))))


def _validate_horizon(T: float, gamma: float, N: int, allow_zero_gamma: bool) -> None:
    if N < 1:
        raise ScheduleError(f"N must be >= 1, got {N}")
    if allow_zero_gamma:
        if gamma < 0:
            raise ScheduleError(f"gamma must be >= 0, got {gamma}")
    elif gamma <= 0:
        raise ScheduleError(f"gamma must be > 0, got {gamma}")
    if T <= gamma:
        raise ScheduleError(f"need T > gamma, got T={T}, gamma={gamma}")

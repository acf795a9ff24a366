"""Discretized reverse-process (DDPM) sampler with exact per-step integration.

Freezing the score estimate over one step turns the reverse SDE into a
linear SDE with constant drift, which integrates in closed form; there is no
inner integrator and no tolerance knob. A step of size h maps x to
e^h x + 2 (e^h - 1) s_hat plus N(0, e^{2h} - 1) noise.
"""

from __future__ import annotations

import csv
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scorelab.forward import sigma_sq
from scorelab.mixtures import IsotropicGaussianMixture
from scorelab.schedules import Schedule


class ScoreModel(ABC):
    """Deterministic map (t, points) -> score vectors, safe for shared reads."""

    descriptor: str = "score_model"

    @abstractmethod
    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        """Score estimate at time t for points of shape (n, d)."""


class AnalyticScore(ScoreModel):
    """Exact score of the smoothed law q_t for a known base mixture."""

    def __init__(self, q0: IsotropicGaussianMixture):
        self.q0 = q0
        self.descriptor = "analytic"

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.q0.smooth(t).score(x)


class FrozenHypothesis(ScoreModel):
    """The time-0 score of a fixed mixture, used at every query time.

    Hypothesis-class members for score estimation at a single smoothing level
    are frozen in this sense: the estimation time is carried by the task, not
    the model.
    """

    def __init__(self, mixture: IsotropicGaussianMixture, label: str):
        self.mixture = mixture
        self.label = label
        self.descriptor = f"frozen[{label}]"

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        return self.mixture.score(x)


class CorruptedScore(ScoreModel):
    """A base model plus a deterministic perturbation, for robustness studies.

    The perturbation is either a constant vector added to every evaluation or
    a callable (t, x) -> array broadcastable against the base output.
    """

    def __init__(self, base: ScoreModel, bias=None, perturbation=None):
        if (bias is None) == (perturbation is None):
            raise ValueError("provide exactly one of bias or perturbation")
        self.base = base
        self.bias = None if bias is None else np.asarray(bias, dtype=float)
        self.perturbation = perturbation
        tag = f"bias={self.bias.tolist()}" if self.bias is not None else "perturbed"
        self.descriptor = f"corrupted[{base.descriptor}, {tag}]"

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        out = self.base.evaluate(t, x)
        if self.bias is not None:
            return out + self.bias
        return out + self.perturbation(t, x)


def ddpm_step(x: np.ndarray, s_hat: np.ndarray, h: float) -> tuple[np.ndarray, float]:
    """Exact one-step update with the score frozen at the step start.

    Returns (mean, noise_std): mean = e^h x + 2 (e^h - 1) s_hat and
    noise_std = sqrt(e^{2h} - 1). The caller adds noise_std * xi with
    xi ~ N(0, I).
    """
    if h <= 0:
        raise ValueError(f"step size must be > 0, got {h}")
    growth = math.expm1(h)  # e^h - 1
    mean = (1.0 + growth) * np.asarray(x) + 2.0 * growth * np.asarray(s_hat)
    noise_std = math.sqrt(math.expm1(2.0 * h))
    return mean, noise_std


@dataclass(frozen=True)
class SamplerOutput:
    """Samples with law ~= q at the schedule's terminal smoothing level."""

    samples: np.ndarray
    schedule: Schedule
    model_descriptor: str
    seed: int | None
    per_step_trace: list | None = None

    @property
    def terminal_time(self) -> float:
        return self.schedule.terminal_time

    def write(self, directory, tag: str = "samples") -> tuple[Path, Path]:
        """Persist samples as CSV (columns x_0..x_{d-1}) plus a JSON sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{tag}.csv"
        d = self.samples.shape[1]
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x_{j}" for j in range(d)])
            for row in self.samples:
                writer.writerow([repr(float(v)) for v in row])
        meta_path = directory / f"{tag}.json"
        meta = {
            "schedule": self.schedule.to_dict(),
            "model": self.model_descriptor,
            "seed": self.seed,
            "n": int(self.samples.shape[0]),
            "terminal_time": self.terminal_time,
        }
        meta_path.write_text(json.dumps(meta, indent=2))
        return csv_path, meta_path


def run_sampler(
    schedule: Schedule,
    model: ScoreModel,
    n: int,
    rng: np.random.Generator,
    init: str = "standard_normal",
    q0: IsotropicGaussianMixture | None = None,
    dim: int | None = None,
    trace: bool = False,
    seed: int | None = None,
) -> SamplerOutput:
    """Walk the schedule from T down to its terminal time.

    init selects the starting law: "standard_normal" (the implementable
    process) or "exact_qT" (the smoothed data law at T, isolating
    discretization error; requires q0).
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if init == "exact_qT":
        if q0 is None:
            raise ValueError("exact_qT initialization requires q0")
        x = np.exp(-schedule.T) * q0.sample(rng, n) + math.sqrt(sigma_sq(schedule.T)) * rng.standard_normal(
            (n, q0.dim)
        )
    elif init == "standard_normal":
        if dim is None:
            base = q0 if q0 is not None else getattr(model, "q0", None)
            if base is None:
                raise ValueError("standard_normal initialization needs dim or q0")
            dim = base.dim
        x = rng.standard_normal((n, dim))
    else:
        raise ValueError(f"unknown init {init!r}")

    times = schedule.times
    steps = schedule.steps
    trace_rows = [] if trace else None
    for k in range(schedule.n_steps):
        t_k = float(times[k])
        s_hat = model.evaluate(t_k, x)
        if not np.all(np.isfinite(s_hat)):
            bad = int(np.argmax(~np.isfinite(s_hat).all(axis=1)))
            raise FloatingPointError(
                f"non-finite score at step {k} (t={t_k:.6g}), |x|={np.linalg.norm(x[bad]):.6g}"
            )
        if trace:
            norms = np.linalg.norm(s_hat, axis=1)
            trace_rows.append(
                (t_k, float(np.mean(np.linalg.norm(x, axis=1))),
                 float(np.quantile(norms, 0.5)), float(np.quantile(norms, 0.9)))
            )
        mean, noise_std = ddpm_step(x, s_hat, float(steps[k]))
        x = mean + noise_std * rng.standard_normal(x.shape)
    return SamplerOutput(x, schedule, model.descriptor, seed, trace_rows)


def terminal_unsmoothing_scale(output: SamplerOutput) -> np.ndarray:
    """Rescale terminal samples by e^{t_N} to undo the residual mean shrink."""
    return math.exp(output.terminal_time) * output.samples

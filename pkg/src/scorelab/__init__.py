"""Numerical laboratory for smoothed-score diffusion sampling.

Exact Gaussian-mixture scores, the forward Ornstein-Uhlenbeck channel,
DDPM-style reverse sampling under several step-size schedules, score-matching
estimation with quantile error metrics, and Monte Carlo verifiers for the
high-probability facts the sampler relies on.
"""

from scorelab.mixtures import IsotropicGaussianMixture
from scorelab.schedules import Schedule, adaptive_schedule, constant_schedule, linear_schedule
from scorelab.sampler import AnalyticScore, CorruptedScore, FrozenHypothesis, ddpm_step, run_sampler

__version__ = "0.1.0"

__all__ = [
    "IsotropicGaussianMixture",
    "Schedule",
    "adaptive_schedule",
    "constant_schedule",
    "linear_schedule",
    "AnalyticScore",
    "FrozenHypothesis",
    "CorruptedScore",
    "ddpm_step",
    "run_sampler",
    "__version__",
]

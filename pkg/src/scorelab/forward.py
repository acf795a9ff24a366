"""Forward Ornstein-Uhlenbeck channel and Monte Carlo lemma verifiers.

The forward process dx = -x dt + sqrt(2) dB maps q_0 to q_t exactly:
x_t ~ e^{-t} x_0 + N(0, (1 - e^{-2t}) I). All path simulation here uses the
exact transition kernel on a grid, never an Euler discretization.

Each verify_* function estimates the (1 - delta)-quantile of a pathwise or
pointwise statistic and divides it by the corresponding analytic bound
evaluated with constant 1. The resulting empirical constant is reported, not
asserted; pass/fail ceilings are policy applied by callers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from scorelab.mixtures import IsotropicGaussianMixture


@dataclass(frozen=True)
class NoiseLevel:
    """Time t paired with its smoothing variance sigma_t^2 = 1 - e^{-2t}."""

    t: float
    sigma_sq: float

    @classmethod
    def from_time(cls, t: float) -> "NoiseLevel":
        if t < 0:
            raise ValueError(f"time must be >= 0, got {t}")
        return cls(float(t), sigma_sq(t))

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma_sq)


def sigma_sq(t) -> float | np.ndarray:
    """Smoothing variance 1 - e^{-2t}, computed as -expm1(-2t)."""
    if np.isscalar(t):
        return -math.expm1(-2.0 * t)
    return -np.expm1(-2.0 * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ForwardPath:
    """Forward trajectories on a time grid, one row of states per grid time.

    states[j] holds the n paths at times[j]; consecutive entries are linked
    by the exact OU transition.
    """

    times: np.ndarray
    states: np.ndarray  # (len(times), n, d)
    seed: int | None = None


@dataclass(frozen=True)
class LemmaReport:
    """Quantile-vs-bound summary produced by a verifier run."""

    lemma_id: str
    trials: int
    delta: float
    empirical_quantile: float
    bound_form: float
    empirical_constant: float
    seed: int | None = None

    @property
    def quantile_level(self) -> float:
        return 1.0 - self.delta

    def to_dict(self) -> dict:
        return {
            "lemma_id": self.lemma_id,
            "trials": self.trials,
            "delta": self.delta,
            "empirical_quantile": self.empirical_quantile,
            "bound_form": self.bound_form,
            "empirical_constant": self.empirical_constant,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _report(lemma_id, values, delta, bound_form, seed) -> LemmaReport:
    quant = float(np.quantile(values, 1.0 - delta, method="higher"))
    constant = quant / bound_form if bound_form > 0 else 0.0
    return LemmaReport(lemma_id, len(values), delta, quant, float(bound_form), float(constant), seed)


# ----------------------------------------------------------------------
# Exact forward simulation
# ----------------------------------------------------------------------

def forward_marginal_sample(q0: IsotropicGaussianMixture, t: float, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw x_0 from q0 and push it through the exact OU channel to time t."""
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    x0 = q0.sample(rng, n)
    if t == 0:
        return x0
    return np.exp(-t) * x0 + math.sqrt(sigma_sq(t)) * rng.standard_normal(x0.shape)


def ou_transition(x: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
    """One exact OU step of duration dt >= 0."""
    if dt == 0:
        return x.copy()
    return np.exp(-dt) * x + math.sqrt(sigma_sq(dt)) * rng.standard_normal(x.shape)


def simulate_forward_path(
    q0: IsotropicGaussianMixture,
    t_lo: float,
    t_hi: float,
    grid_steps: int,
    rng: np.random.Generator,
    n: int = 1,
) -> ForwardPath:
    """Exact forward trajectories on an even grid over [t_lo, t_hi]."""
    if not 0 <= t_lo < t_hi:
        raise ValueError(f"need 0 <= t_lo < t_hi, got [{t_lo}, {t_hi}]")
    if grid_steps < 1:
        raise ValueError(f"grid_steps must be >= 1, got {grid_steps}")
    times = np.linspace(t_lo, t_hi, grid_steps + 1)
    x = forward_marginal_sample(q0, t_lo, rng, n)
    states = np.empty((grid_steps + 1, n, q0.dim))
    states[0] = x
    for j in range(grid_steps):
        x = ou_transition(x, times[j + 1] - times[j], rng)
        states[j + 1] = x
    return ForwardPath(times, states)


def _grid_states(q0, t_start, t_end, points, rng, n):
    """States at `points` evenly spaced times from t_start up to t_end."""
    if points < 2 or t_end == t_start:
        x = forward_marginal_sample(q0, t_end, rng, n)
        return np.array([t_end]), x[None, :, :]
    path = simulate_forward_path(q0, t_start, t_end, points - 1, rng, n)
    return path.times, path.states


# ----------------------------------------------------------------------
# Lemma verifiers
# ----------------------------------------------------------------------

PATH_GRID_POINTS = 64
SCORE_GRID_POINTS = 16
POWER_ITERATIONS = 200
POWER_TOL = 1e-8


def verify_max_deviation(
    q0: IsotropicGaussianMixture,
    t_k: float,
    h: float,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> LemmaReport:
    """Max squared deviation of e^{t_k - t} X_{t_k} from X_t over [t_k - h, t_k].

    Bound form: h (d + log(1/delta)).
    """
    if h < 0 or h >= 1:
        raise ValueError(f"need 0 <= h < 1, got {h}")
    if t_k - h < 0 or (h > 0 and h >= t_k):
        raise ValueError(f"window [t_k - h, t_k] invalid for t_k={t_k}, h={h}")
    times, states = _grid_states(q0, t_k - h, t_k, PATH_GRID_POINTS, rng, trials)
    end = states[-1]
    scale = np.exp(t_k - times)[:, None, None]
    dev = np.max(np.sum((scale * end[None, :, :] - states) ** 2, axis=2), axis=0)
    bound = h * (q0.dim + math.log(1.0 / delta))
    return _report("max_deviation", dev, delta, bound, seed)


def verify_score_norm_subgaussian(
    q0: IsotropicGaussianMixture,
    t: float,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> LemmaReport:
    """Quantile of ||score(q_t, x)||^2 for x ~ q_t vs (d + log(1/delta)) / sigma_t^2."""
    if t <= 0:
        raise ValueError(f"need t > 0, got {t}")
    qt = q0.smooth(t)
    x = qt.sample(rng, trials)
    norms = np.sum(qt.score(x) ** 2, axis=1)
    bound = (q0.dim + math.log(1.0 / delta)) / sigma_sq(t)
    return _report("score_norm_subgaussian", norms, delta, bound, seed)


def spectral_norm(mat: np.ndarray, iterations: int = POWER_ITERATIONS, tol: float = POWER_TOL) -> float:
    """Power iteration on a symmetric matrix, deterministic start vector."""
    d = mat.shape[0]
    v = np.zeros(d)
    v[0] = 1.0
    v += 1e-3
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(iterations):
        w = mat @ v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
        if abs(lam - prev) <= tol * max(1.0, abs(lam)):
            break
        prev = lam
    return lam


def _batch_spectral_norms(mats: np.ndarray) -> np.ndarray:
    return np.array([spectral_norm(m) for m in mats])


def verify_local_lipschitz(
    q0: IsotropicGaussianMixture,
    t: float,
    radius_scale: float,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> LemmaReport:
    """Spectral norm of the score Jacobian near samples of q_t.

    Perturbations are uniform in the ball of radius
    radius_scale * sigma_t / sqrt(d + log(1/delta)); the bound form is
    (d + log(1/delta)) / sigma_t^2.
    """
    if t <= 0:
        raise ValueError(f"need t > 0, got {t}")
    d = q0.dim
    if d > 16:
        raise ValueError(f"Jacobian verifier limited to d <= 16, got {d}")
    qt = q0.smooth(t)
    x = qt.sample(rng, trials)
    var = sigma_sq(t)
    dlog = d + math.log(1.0 / delta)
    radius = radius_scale * math.sqrt(var) / math.sqrt(dlog)
    direction = rng.standard_normal((trials, d))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = radius * rng.random(trials) ** (1.0 / d)
    norms = _batch_spectral_norms(qt.score_jacobian(x + r[:, None] * direction))
    return _report("local_lipschitz", norms, delta, dlog / var, seed)


def reduced_smoothing_law(q0: IsotropicGaussianMixture, t_k: float, eta: float) -> IsotropicGaussianMixture:
    """Same e^{-t_k}-scaled base as q_{t_k}, smoothing variance scaled by (1-eta)^2."""
    decay = np.exp(-2.0 * t_k)
    return IsotropicGaussianMixture(
        q0.dim,
        q0.log_weights,
        np.exp(-t_k) * q0.means,
        decay * q0.variances + (1.0 - eta) ** 2 * sigma_sq(t_k),
    )


def verify_smoothing_drift(
    q0: IsotropicGaussianMixture,
    t_k: float,
    eta: float,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> LemmaReport:
    """Squared score drift when the smoothing level shrinks by a factor 1 - eta.

    Bound form: (eta^2 / sigma_{t_k}^2) (d + log(1/(eta delta)))^3.
    """
    if t_k <= 0:
        raise ValueError(f"need t_k > 0, got {t_k}")
    if not 0 < eta < 1:
        raise ValueError(f"need eta in (0, 1), got {eta}")
    qt = q0.smooth(t_k)
    reduced = reduced_smoothing_law(q0, t_k, eta)
    x = qt.sample(rng, trials)
    drift = np.sum((qt.score(x) - reduced.score(x)) ** 2, axis=1)
    var = sigma_sq(t_k)
    bound = (eta**2 / var) * (q0.dim + math.log(1.0 / (eta * delta))) ** 3
    return _report("smoothing_drift", drift, delta, bound, seed)


def verify_single_step_discretization(
    q0: IsotropicGaussianMixture,
    t_k: float,
    epsilon: float,
    trials: int,
    delta: float,
    rng: np.random.Generator,
    seed: int | None = None,
) -> LemmaReport:
    """Max squared gap between the step-start frozen score and the moving score.

    The step size is h_k = epsilon (1 - e^{-2 t_k}) / (d + log(1/delta))^3;
    the statistic is max over a grid of t in [t_k - h_k, t_k] of
    ||s_{t_k}(X_{t_k}) - s_t(X_t)||^2, against bound epsilon / (1 - e^{-2 t_k}).
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"need epsilon in (0, 1), got {epsilon}")
    var_k = sigma_sq(t_k)
    h_k = epsilon * var_k / (q0.dim + math.log(1.0 / delta)) ** 3
    if h_k < 1e-12:
        raise ValueError(f"step underflow: h_k={h_k:.3g}")
    if t_k - h_k < 0:
        raise ValueError(f"step h_k={h_k:.3g} exceeds t_k={t_k}")
    times, states = _grid_states(q0, t_k - h_k, t_k, SCORE_GRID_POINTS, rng, trials)
    score_end = q0.smooth(t_k).score(states[-1])
    worst = np.zeros(trials)
    for j, t in enumerate(times):
        gap = np.sum((score_end - q0.smooth(t).score(states[j])) ** 2, axis=1)
        np.maximum(worst, gap, out=worst)
    return _report("single_step_discretization", worst, delta, epsilon / var_k, seed)

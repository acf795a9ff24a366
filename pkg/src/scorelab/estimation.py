"""Score-matching loss, finite-class ERM, quantile error metrics, and the
hard instances where small-sample ERM cannot identify the right score.

The training triple is (y, z, x) with y from the data law, z Gaussian noise
at the task's smoothing level, and x = e^{-t} y + z. Regressing -z/sigma^2
onto functions of x is minimized in expectation by the true smoothed score,
so the per-sample excess loss decomposes exactly as
l'(s, x, z) = ||s(x) - s*(x)||^2 + 2 <s(x) - s*(x), s*(x) + z/sigma^2>.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from scorelab.forward import sigma_sq
from scorelab.mixtures import IsotropicGaussianMixture
from scorelab.sampler import FrozenHypothesis, ScoreModel
from scorelab.schedules import Schedule


@dataclass(frozen=True)
class PairedSample:
    """One training triple; z is stored, never re-derived from x.

    t is the forward time when the triple comes from the OU channel, or None
    for tasks posed directly in smoothed coordinates (x = y + z).
    """

    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    t: float | None
    noise_variance: float


@dataclass(frozen=True)
class PairedBatch:
    """Vectorized training triples sharing one task time and noise level."""

    y: np.ndarray  # (m, d)
    z: np.ndarray  # (m, d)
    x: np.ndarray  # (m, d)
    t: float | None
    noise_variance: float

    @property
    def size(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_samples(cls, samples: list[PairedSample]) -> "PairedBatch":
        if not samples:
            raise ValueError("batch must be non-empty")
        t = samples[0].t
        var = samples[0].noise_variance
        if any(s.t != t or s.noise_variance != var for s in samples):
            raise ValueError("batch mixes task times")
        return cls(
            np.stack([s.y for s in samples]),
            np.stack([s.z for s in samples]),
            np.stack([s.x for s in samples]),
            t,
            var,
        )

    def sample(self, i: int) -> PairedSample:
        return PairedSample(self.y[i], self.z[i], self.x[i], self.t, self.noise_variance)

    def write_csv(self, path) -> None:
        import csv

        d = self.y.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [f"y_{j}" for j in range(d)] + [f"z_{j}" for j in range(d)] + [f"x_{j}" for j in range(d)] + ["t"]
            )
            t_cell = "" if self.t is None else repr(float(self.t))
            for y, z, x in zip(self.y, self.z, self.x):
                writer.writerow([repr(float(v)) for v in (*y, *z, *x)] + [t_cell])


def draw_paired_batch(
    q0: IsotropicGaussianMixture, t: float, m: int, rng: np.random.Generator
) -> PairedBatch:
    """Draw m triples (y, z, x = e^{-t} y + z) at task time t > 0."""
    if t <= 0:
        raise ValueError(f"task time must be > 0, got {t}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    var = sigma_sq(t)
    y = q0.sample(rng, m)
    z = math.sqrt(var) * rng.standard_normal(y.shape)
    return PairedBatch(y, z, math.exp(-t) * y + z, t, var)


def draw_smoothed_batch(
    atoms: np.ndarray, weights: np.ndarray, sigma: float, m: int, rng: np.random.Generator
) -> PairedBatch:
    """Draw m triples directly at smoothing level sigma: x = y + z.

    y is an atom of the unsmoothed base (categorical draw), z ~ N(0, sigma^2 I).
    The smoothed law of x is the mixture of N(atom, sigma^2) components, so
    tasks stated for sigma-smoothed distributions need no OU time parameter.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    weights = np.asarray(weights, dtype=float)
    idx = rng.choice(atoms.shape[0], size=m, p=weights)
    y = atoms[idx]
    z = sigma * rng.standard_normal(y.shape)
    return PairedBatch(y, z, y + z, None, sigma * sigma)


@dataclass(frozen=True)
class HypothesisClass:
    """Finite list of labeled candidate score models for one task time."""

    members: tuple
    labels: tuple
    t: float | None = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("hypothesis class must be non-empty")
        if len(self.members) != len(self.labels):
            raise ValueError("labels and members differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("hypothesis labels must be unique")


@dataclass(frozen=True)
class ErrorReport:
    """L2 and (1 - delta)-quantile distance between two score maps under p."""

    l2_sq: float
    quantile_eps: float
    delta: float
    n_eval: int

    def to_dict(self) -> dict:
        return {"l2_sq": self.l2_sq, "quantile_eps": self.quantile_eps, "delta": self.delta, "n_eval": self.n_eval}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ----------------------------------------------------------------------
# Losses
# ----------------------------------------------------------------------

def _eval_time(t: float | None) -> float:
    return 0.0 if t is None else t


def score_matching_loss(model: ScoreModel, batch: PairedBatch) -> float:
    """(1/m) sum ||s(x_i) + z_i / sigma^2||^2."""
    target = -batch.z / batch.noise_variance
    residual = model.evaluate(_eval_time(batch.t), batch.x) - target
    return float(np.mean(np.sum(residual**2, axis=1)))


def l_prime(model: ScoreModel, true_score: ScoreModel, sample: PairedSample) -> float:
    """Excess loss of one sample: equals l(model) - l(true) algebraically."""
    t = _eval_time(sample.t)
    x = sample.x[None, :]
    gap = model.evaluate(t, x)[0] - true_score.evaluate(t, x)[0]
    delta = true_score.evaluate(t, x)[0] + sample.z / sample.noise_variance
    return float(np.dot(gap, gap) + 2.0 * np.dot(gap, delta))


def l_prime_batch(model: ScoreModel, true_score: ScoreModel, batch: PairedBatch) -> np.ndarray:
    t = _eval_time(batch.t)
    gap = model.evaluate(t, batch.x) - true_score.evaluate(t, batch.x)
    delta = true_score.evaluate(t, batch.x) + batch.z / batch.noise_variance
    return np.sum(gap**2, axis=1) + 2.0 * np.sum(gap * delta, axis=1)


def erm(hypotheses: HypothesisClass, batch: PairedBatch) -> tuple[str, dict]:
    """Empirical risk minimizer over the class; ties go to the lowest label.

    Returns (winning label, {label: loss}). With exactly tied losses the
    lexicographically smallest label wins, a deterministic convention that a
    worst-case adversary is free to exploit.
    """
    if batch.size < 1:
        raise ValueError("batch must be non-empty")
    if batch.t != hypotheses.t:
        raise ValueError(f"class time {hypotheses.t} != batch time {batch.t}")
    table = {label: score_matching_loss(member, batch) for label, member in zip(hypotheses.labels, hypotheses.members)}
    best = min(sorted(table), key=lambda lab: table[lab])
    return best, table


def error_report(
    f: ScoreModel,
    g: ScoreModel,
    p: IsotropicGaussianMixture,
    delta: float,
    n_eval: int,
    rng: np.random.Generator,
    t: float = 0.0,
) -> ErrorReport:
    """Monte Carlo L2 and quantile distance between f and g under x ~ p.

    quantile_eps is the order statistic of ||f - g|| at 1-based index
    ceil((1 - delta) n), clamped to the minimum at delta = 1.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must be in (0, 1], got {delta}")
    needed = math.ceil(10.0 / delta)
    if n_eval < needed:
        raise ValueError(f"n_eval={n_eval} too small for delta={delta}; need >= {needed}")
    x = p.sample(rng, n_eval)
    gaps = np.linalg.norm(f.evaluate(t, x) - g.evaluate(t, x), axis=1)
    order = np.sort(gaps)
    idx = max(1, math.ceil((1.0 - delta) * n_eval))
    return ErrorReport(float(np.mean(gaps**2)), float(order[idx - 1]), delta, n_eval)


def quantile_error(values: np.ndarray, delta: float) -> float:
    """The ceil((1 - delta) n) order statistic (1-based, lower side)."""
    order = np.sort(np.asarray(values).reshape(-1))
    idx = max(1, math.ceil((1.0 - delta) * order.shape[0]))
    return float(order[idx - 1])


# ----------------------------------------------------------------------
# Girsanov KL functional
# ----------------------------------------------------------------------

def girsanov_kl_functional(
    schedule: Schedule,
    model: ScoreModel,
    q0: IsotropicGaussianMixture,
    n_paths: int,
    rng: np.random.Generator,
) -> float:
    """sum_k h_k E_{x ~ q_{t_k}} ||s_{t_k}(x) - s_hat_{t_k}(x)||^2.

    Estimates the path-measure KL divergence between the true-score and
    estimated-score reverse processes, up to an absolute constant.
    """
    total = 0.0
    for t_k, h_k in zip(schedule.times[:-1], schedule.steps):
        qt = q0.smooth(float(t_k))
        x = qt.sample(rng, n_paths)
        gap = model.evaluate(float(t_k), x) - qt.score(x)
        total += float(h_k) * float(np.mean(np.sum(gap**2, axis=1)))
    return total


# ----------------------------------------------------------------------
# Hard instances
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class InfoTheoreticPair:
    """Mirror mixtures indistinguishable from o(1/eta) samples."""

    p1: IsotropicGaussianMixture
    p2: IsotropicGaussianMixture
    s1: ScoreModel
    s2: ScoreModel
    eta: float
    R: float
    sigma: float


def build_info_theoretic_pair(eta: float, R: float, sigma: float = 1.0) -> InfoTheoreticPair:
    """p1 = (1-eta) N(0, sigma^2) + eta N(-R, sigma^2) and its +R mirror.

    The score models are the mixtures' own (time-0) scores, used directly as
    candidate hypotheses for estimation at smoothing level sigma.
    """
    if not 0 < eta < 1:
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    if R <= 0:
        raise ValueError(f"R must be > 0, got {R}")
    var = sigma * sigma
    p1 = IsotropicGaussianMixture.from_weights([1.0 - eta, eta], [[0.0], [-R]], [var, var])
    p2 = IsotropicGaussianMixture.from_weights([1.0 - eta, eta], [[0.0], [R]], [var, var])
    return InfoTheoreticPair(p1, p2, FrozenHypothesis(p1, "spike_minus"), FrozenHypothesis(p2, "spike_plus"), eta, R, sigma)


@dataclass(frozen=True)
class ScoreMatchingLowerBoundInstance:
    """A far-mode mixture whose score matches -x/sigma^2 on the sample region."""

    p_star: IsotropicGaussianMixture
    s_star: ScoreModel
    p_hat: IsotropicGaussianMixture
    s_hat: ScoreModel
    log_eta: float
    S: float
    m: int
    sigma: float


def lower_bound_log_eta(S: float, m: int) -> float:
    """log of eta = S exp(-S^2/2 + 10 sqrt(log m) S) / (10 sqrt(log m))."""
    root = 10.0 * math.sqrt(math.log(m))
    return math.log(S) - 0.5 * S * S + root * S - math.log(root)


def build_score_matching_lower_bound_instance(
    S: float, m: int, sigma: float = 1.0
) -> ScoreMatchingLowerBoundInstance:
    """Adversarial mixture eta N(0, sigma^2) + (1 - eta) N(S, sigma^2).

    eta is computed entirely in log space; construction is rejected when the
    formula yields eta >= 1, which happens whenever S < ~20 sqrt(log m).
    """
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    if S <= 0:
        raise ValueError(f"S must be > 0, got {S}")
    log_eta = lower_bound_log_eta(S, m)
    if log_eta >= 0.0:
        raise ValueError(
            f"eta >= 1 for S={S}, m={m} (log eta = {log_eta:.4g}); "
            f"the construction needs S large enough that log eta < 0"
        )
    var = sigma * sigma
    p_star = IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [var])
    log_weights = np.array([log_eta, math.log1p(-math.exp(log_eta)) if log_eta > -700 else 0.0])
    p_hat = IsotropicGaussianMixture(1, log_weights, np.array([[0.0], [S]]), np.array([var, var]))
    return ScoreMatchingLowerBoundInstance(
        p_star,
        FrozenHypothesis(p_star, "gaussian"),
        p_hat,
        FrozenHypothesis(p_hat, "far_mode_mixture"),
        log_eta,
        S,
        m,
        sigma,
    )

"""Distribution-distance estimators for one-dimensional experiments.

Total variation by adaptive Simpson quadrature of |p - q| / 2, empirical
1-d Wasserstein-2 by quantile coupling, a binned TV for sample-vs-density
comparisons, and the closed-form endpoint bounds used as test oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from scorelab.mixtures import IsotropicGaussianMixture


@dataclass(frozen=True)
class DistanceEstimate:
    kind: str
    value: float
    standard_error: float | None = None


# ----------------------------------------------------------------------
# Quadrature TV
# ----------------------------------------------------------------------

def _adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + _adaptive_simpson(
        f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1
    )


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-8, breakpoints=(), max_depth: int = 48) -> float:
    """Integrate f over [a, b], splitting at breakpoints before recursing."""
    knots = sorted({a, b, *(p for p in breakpoints if a < p < b)})
    total = 0.0
    for lo, hi in zip(knots[:-1], knots[1:]):
        m = 0.5 * (lo + hi)
        fa, fm, fb = f(lo), f(m), f(hi)
        whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)
        total += _adaptive_simpson(f, lo, hi, fa, fm, fb, whole, tol / max(1, len(knots) - 1), max_depth)
    return total


def _union_breakpoints(p: IsotropicGaussianMixture, q: IsotropicGaussianMixture):
    pts = []
    for g in (p, q):
        sds = np.sqrt(g.variances)
        for mu, sd in zip(g.means[:, 0], sds):
            pts.extend([mu - 6 * sd, mu - sd, mu, mu + sd, mu + 6 * sd])
    return pts


def tv_quadrature_1d(p: IsotropicGaussianMixture, q: IsotropicGaussianMixture, tol: float = 1e-8) -> DistanceEstimate:
    """TV(p, q) = (1/2) integral |p - q| over the union 12-sd support."""
    if p.dim != 1 or q.dim != 1:
        raise ValueError("tv_quadrature_1d requires one-dimensional mixtures")
    lo_p, hi_p = p.support_interval(12.0)
    lo_q, hi_q = q.support_interval(12.0)
    lo, hi = min(lo_p, lo_q), max(hi_p, hi_q)

    def integrand(x):
        pt = np.array([[x]])
        return abs(math.exp(p.log_density(pt)[0]) - math.exp(q.log_density(pt)[0]))

    value = 0.5 * adaptive_simpson(integrand, lo, hi, tol=tol, breakpoints=_union_breakpoints(p, q))
    return DistanceEstimate("tv_quadrature", min(max(value, 0.0), 1.0 + 1e-9))


# ----------------------------------------------------------------------
# Wasserstein-2
# ----------------------------------------------------------------------

def w2_empirical_1d(samples_a: np.ndarray, samples_b: np.ndarray) -> DistanceEstimate:
    """Quantile-coupled W2 between equal-size 1-d samples."""
    a = np.asarray(samples_a, dtype=float).reshape(-1)
    b = np.asarray(samples_b, dtype=float).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    gaps = np.sort(a) - np.sort(b)
    return DistanceEstimate("w2_empirical_1d", float(np.sqrt(np.mean(gaps**2))))


def w2_gaussian_exact(var_a: float, var_b: float, mean_a: float = 0.0, mean_b: float = 0.0) -> float:
    """W2 between two 1-d Gaussians (oracle for tests)."""
    if var_a <= 0 or var_b <= 0:
        raise ValueError("variances must be > 0")
    return math.sqrt((mean_a - mean_b) ** 2 + (math.sqrt(var_a) - math.sqrt(var_b)) ** 2)


# ----------------------------------------------------------------------
# Binned TV
# ----------------------------------------------------------------------

def equal_mass_edges(p: IsotropicGaussianMixture, bins: int) -> np.ndarray:
    """Interior bin edges at analytic mass j/bins over the 10-sd support."""
    lo, hi = p.support_interval(10.0)
    edges = [lo]
    for j in range(1, bins):
        target = j / bins
        edges.append(brentq(lambda x: float(p.cdf_1d(x)[0]) - target, lo, hi, xtol=1e-12))
    edges.append(hi)
    return np.array(edges)


def tv_binned(samples: np.ndarray, p: IsotropicGaussianMixture, bins: int = 64) -> DistanceEstimate:
    """Half L1 gap between empirical bin masses and analytic bin masses."""
    if p.dim != 1:
        raise ValueError("tv_binned requires a one-dimensional mixture")
    if bins < 16:
        raise ValueError(f"bins must be >= 16, got {bins}")
    x = np.asarray(samples, dtype=float).reshape(-1)
    edges = equal_mass_edges(p, bins)
    counts, _ = np.histogram(x, bins=edges)
    emp = counts / x.shape[0]
    # Mass that falls outside the support box is counted as discrepancy.
    emp_outside = 1.0 - emp.sum()
    cdf = p.cdf_1d(edges)
    ana = np.diff(cdf)
    value = 0.5 * (float(np.sum(np.abs(emp - ana))) + float(emp_outside) + (1.0 - float(cdf[-1] - cdf[0])))
    return DistanceEstimate("tv_binned", min(value, 1.0))


# ----------------------------------------------------------------------
# Endpoint bounds
# ----------------------------------------------------------------------

def endpoint_bounds(q0: IsotropicGaussianMixture, gamma: float, T: float) -> tuple[float, float]:
    """(W2 bound gamma m2 + sqrt(2 gamma), TV bound e^{-T} m2)."""
    if not 0 <= gamma < 1:
        raise ValueError(f"gamma must be in [0, 1), got {gamma}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    m2 = q0.second_moment_sqrt()
    return gamma * m2 + math.sqrt(2.0 * gamma), math.exp(-T) * m2

"""Acceptance suite: one test per exit criterion, each printing a PASS/FAIL line.

Criterion 7 is implemented faithfully at its stated constants and is expected
to fail: the mixture-weight formula gives eta >= 1 at (sigma=1, S=40, m=1e4),
and no weight in (0, 1) can satisfy both halves of the check at once (see the
assertion message for the numbers).
"""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from scorelab.estimation import (
    HypothesisClass,
    build_info_theoretic_pair,
    build_score_matching_lower_bound_instance,
    draw_paired_batch,
    draw_smoothed_batch,
    erm,
    error_report,
    l_prime,
    l_prime_batch,
    score_matching_loss,
)
from scorelab.forward import forward_marginal_sample
from scorelab.lab import catalog_mixtures, run_experiment
from scorelab.metrics import adaptive_simpson, tv_quadrature_1d, w2_empirical_1d
from scorelab.mixtures import IsotropicGaussianMixture
from scorelab.rng import substream
from scorelab.sampler import AnalyticScore, CorruptedScore, ddpm_step, run_sampler
from scorelab.schedules import adaptive_schedule

from conftest import random_mixture


def record(criterion: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"{criterion}: {detail}"


def fd_gradient(f, x, step):
    g = np.zeros_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def test_criterion_1_analytic_core():
    """Score and Jacobian match finite differences; curvature bounded below."""
    rng = substream(101, "acc1")
    worst_score = 0.0
    worst_jac = 0.0
    eig_ok = True
    for _ in range(1000):
        g = random_mixture(rng)
        x = g.sample(rng, 1)[0] + 0.5 * rng.standard_normal(g.dim)
        step = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        fd_score = fd_gradient(lambda p: g.log_density(p), x, step)
        an_score = g.score(x)
        rel = float(np.linalg.norm(fd_score - an_score)) / max(float(np.linalg.norm(fd_score)), 1e-9)
        worst_score = max(worst_score, rel)

        fd_jac = np.stack(
            [
                (g.score(x + step * e) - g.score(x - step * e)) / (2 * step)
                for e in np.eye(g.dim)
            ],
            axis=1,
        )
        an_jac = g.score_jacobian(x)
        rel_j = float(np.max(np.abs(fd_jac - an_jac))) / max(float(np.max(np.abs(an_jac))), 1e-9)
        worst_jac = max(worst_jac, rel_j)

        eigs = np.linalg.eigvalsh(an_jac)
        eig_ok &= bool(np.all(eigs >= -1.0 / np.min(g.variances) - 1e-8))
    record(
        "criterion-1",
        worst_score < 1e-4 and worst_jac < 1e-4 and eig_ok,
        f"worst score rel {worst_score:.2e}, worst jacobian rel {worst_jac:.2e}, eig bound {eig_ok}",
    )


def test_criterion_2_single_gaussian_law():
    """Forward variance law and reverse-sampler terminal variance, rho in {0.1, 0.5}."""
    n = 100_000
    details = []
    ok = True
    for rho in (0.1, 0.5):
        g = IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [rho**2])
        for t in (0.25, 1.0):
            x = forward_marginal_sample(g, t, substream(102, "acc2_fwd", str(rho), str(t)), n)
            target = 1.0 - math.exp(-2 * t) * (1 - rho**2)
            fwd_rel = abs(float(np.var(x)) - target) / target
            ok &= fwd_rel < 0.05
        sch = adaptive_schedule(3.0, 0.01, 400)
        out = run_sampler(sch, AnalyticScore(g), n, substream(103, "acc2_rev", str(rho)), q0=g)
        target = 1.0 - math.exp(-2 * sch.terminal_time) * (1 - rho**2)
        rev_rel = abs(float(np.var(out.samples)) - target) / target
        ok &= rev_rel < 0.05
        details.append(f"rho={rho}: reverse rel err {rev_rel:.3f}")
    record("criterion-2", ok, "; ".join(details))


def test_criterion_3_exact_step_oracle():
    """ddpm_step mean/variance vs Euler-Maruyama with 1e4 substeps, 1e5 paths."""
    x0, s_hat = 0.7, -1.3
    substeps, n = 10_000, 100_000
    ok = True
    details = []
    for h in (0.01, 0.05, 0.2):
        rng = substream(104, "acc3", str(h))
        dt = h / substeps
        x = np.full(n, x0)
        root = math.sqrt(2 * dt)
        for _ in range(substeps):
            x += (x + 2 * s_hat) * dt + root * rng.standard_normal(n)
        mean, std = ddpm_step(np.array([x0]), np.array([s_hat]), h)
        se_mean = std / math.sqrt(n)
        se_var = std**2 * math.sqrt(2.0 / (n - 1))
        dm = abs(float(np.mean(x)) - mean[0])
        dv = abs(float(np.var(x)) - std**2)
        ok &= dm < 4 * se_mean + 5 * h / substeps and dv < 4 * se_var + 5 * h / substeps
        details.append(f"h={h}: |dmean|={dm:.2e} (4se={4 * se_mean:.2e}), |dvar|={dv:.2e} (4se={4 * se_var:.2e})")
    record("criterion-3", ok, "; ".join(details))


def test_criterion_4_schedule_law():
    """Adaptive terminal in [gamma/8, gamma]; per-step ratio constant to 1e-12."""
    rng = substream(105, "acc4")
    ok = True
    for _ in range(50):
        T = float(rng.uniform(1.0, 5.0))
        gamma = float(np.exp(rng.uniform(np.log(1e-4), np.log(0.3))))
        budget = T + math.log(1.0 / gamma)
        N = int(rng.integers(math.ceil(4 * budget), math.ceil(8 * budget)))
        sch = adaptive_schedule(T, gamma, N)
        ratios = sch.steps / (-np.expm1(-2.0 * sch.times[:-1]))
        ok &= bool(np.all(np.abs(ratios - budget / N) <= 1e-12 * budget / N))
        ok &= gamma / 8.0 <= sch.terminal_time <= gamma
    record("criterion-4", ok, "50 random (T, gamma, N) configurations")


def test_criterion_5_synthetic_schedule_comparison():
    """Adaptive W2 <= constant W2 at matched realized steps, 4 of 5 points, 3 seeds."""
    sweep = [20, 50, 100, 200, 400]
    votes = {n: 0 for n in sweep}
    for seed in range(3):
        res = run_experiment(
            {
                "experiment": "schedule_compare",
                "seed": seed,
                "sweep": sweep,
                "n_paths": 20_000,
                "kinds": ["adaptive", "constant"],
            }
        )
        by_key = {(r["kind"], r["N_requested"]): r for r in res.rows}
        for n in sweep:
            a, c = by_key[("adaptive", n)], by_key[("constant", n)]
            assert a["steps_realized"] == c["steps_realized"]
            votes[n] += a["w2_terminal"] <= c["w2_terminal"]
    points = sum(votes[n] >= 2 for n in sweep)
    record("criterion-5", points >= 4, f"adaptive wins 3-seed majority at {points}/5 sweep points ({votes})")


def test_criterion_6_hardness_separation():
    """Mirror-spike pair: L2 gap large, quantile error tiny, ERM fooled."""
    eta, R = 0.001, 10_000.0
    pair = build_info_theoretic_pair(eta, R, 1.0)

    def integrand(x):
        pt = np.array([[x]])
        gap = pair.s1.evaluate(0, pt)[0, 0] - pair.s2.evaluate(0, pt)[0, 0]
        return gap * gap * math.exp(pair.p1.log_density(pt)[0])

    breakpoints = [-R - 6, -R - 1, -R, -R + 1, -R + 6, -6, 0, 6]
    l2_quad = adaptive_simpson(integrand, -R - 10, 10, tol=1.0, breakpoints=breakpoints)
    l2_ok = l2_quad >= 0.5 * eta * R * R

    rep = error_report(pair.s2, pair.s1, pair.p1, 0.01, 100_000, substream(106, "acc6_q"))
    quant_ok = rep.quantile_eps <= 1e-3

    res = run_experiment(
        {"experiment": "hard_instance", "seed": 106, "trials": 200, "n_eval": 10_000}
    )
    by_m = {r["m"]: r for r in res.rows}
    erm_ok = by_m[100]["l2_fail_frac"] >= 0.30
    quant_fail_ok = all(r["quantile_fail_frac"] <= 0.05 for r in res.rows)

    record(
        "criterion-6",
        l2_ok and quant_ok and erm_ok and quant_fail_ok,
        f"quadrature L2 {l2_quad:.3g} (need >= {0.5 * eta * R * R:.3g}), "
        f"quantile_eps {rep.quantile_eps:.3g}, ERM fooled {by_m[100]['l2_fail_frac']:.2f}, "
        f"max quantile-fail {max(r['quantile_fail_frac'] for r in res.rows):.3f}",
    )


def test_criterion_7_score_matching_lower_bound():
    """Lower-bound instance at sigma=1, S=40, m=1e4: loss gap tiny AND L2 gap large.

    Expected to fail: the weight formula gives log eta = -S^2/2 +
    10 sqrt(log m) S + log(S / (10 sqrt(log m))) = +414.2 at these constants,
    so eta >= 1 and the mixture cannot be built. No eta in (0, 1) rescues the
    criterion either: a loss gap <= 1e-6 in >= 49/50 seeds needs the score
    crossing beyond ~4.9 sigma, while an L2 gap >= 0.1 S^2/m needs it below
    ~4.27 sigma; at the feasibility boundary the per-seed failure rate is
    ~17%, giving P(>= 49/50 seeds) ~ 1e-3.
    """
    S, m = 40.0, 10_000
    try:
        inst = build_score_matching_lower_bound_instance(S, m, sigma=1.0)
    except ValueError as exc:
        record("criterion-7", False, f"instance unconstructible: {exc}")
        return

    failures = 0
    for seed in range(50):
        batch = draw_smoothed_batch([[0.0]], [1.0], 1.0, m, substream(seed, "acc7"))
        gap = abs(score_matching_loss(inst.s_hat, batch) - score_matching_loss(inst.s_star, batch))
        failures += gap > 1e-6
    loss_ok = failures <= 1

    def integrand(x):
        pt = np.array([[x]])
        gap = inst.s_hat.evaluate(0, pt)[0, 0] - inst.s_star.evaluate(0, pt)[0, 0]
        return gap * gap * math.exp(inst.p_star.log_density(pt)[0])

    l2_quad = adaptive_simpson(integrand, -12.0, S + 12.0, tol=1e-10, breakpoints=[0.0, 5.0, 10.0, S])
    l2_ok = l2_quad >= 0.1 * S * S / m
    record(
        "criterion-7",
        loss_ok and l2_ok,
        f"loss-gap failures {failures}/50, quadrature L2 gap {l2_quad:.3g} (need >= {0.1 * S * S / m:.3g})",
    )


def test_criterion_8_lemma_verifier_suite():
    """All empirical constants <= 10 at trials=4000, stable within 2x over 5 seeds."""
    per_case = {}
    worst = 0.0
    for seed in range(5):
        res = run_experiment({"experiment": "verify_lemmas", "seed": seed, "trials": 4000, "delta": 0.1})
        for row in res.rows:
            key = (row["lemma_id"], row["mixture"], row["params"])
            per_case.setdefault(key, []).append(row["empirical_constant"])
            worst = max(worst, row["empirical_constant"])
    stable = all(max(v) <= 2.0 * min(v) for v in per_case.values() if min(v) > 0)
    zero_cases = [k for k, v in per_case.items() if min(v) == 0]
    record(
        "criterion-8",
        worst <= 10.0 and stable and not zero_cases,
        f"worst constant {worst:.3f}, {len(per_case)} cases x 5 seeds, stability 2x {stable}",
    )


def test_criterion_9_girsanov_budget_scaling():
    """Log-log slope of the pathwise discretization functional in [-1.5, -0.6]."""
    res = run_experiment(
        {"experiment": "girsanov_budget", "seed": 109, "sweep": [50, 100, 200, 400, 800], "n_mc": 200}
    )
    slope = res.manifest["loglog_slope"]
    record("criterion-9", -1.5 <= slope <= -0.6, f"slope {slope:.3f}")


def test_criterion_10_loss_decomposition_identity():
    """Mean l' equals the loss difference within 1e-9; l'(s*, .) = 0 exactly."""
    mixtures = [
        IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [1.0]),
        IsotropicGaussianMixture.from_weights([0.5, 0.5], [[-0.5], [0.5]], [1e-4, 1e-4]),
    ]
    ok = True
    worst = 0.0
    for g in mixtures:
        truth = AnalyticScore(g)
        rng = substream(110, "acc10", g.n_components)
        for bias in (0.3, -1.1):
            other = CorruptedScore(truth, bias=[bias])
            for _ in range(5):
                batch = draw_paired_batch(g, 0.5, 512, rng)
                gap = score_matching_loss(other, batch) - score_matching_loss(truth, batch)
                mean_lp = float(np.mean(l_prime_batch(other, truth, batch)))
                worst = max(worst, abs(mean_lp - gap))
                ok &= abs(mean_lp - gap) < 1e-9
        batch = draw_paired_batch(g, 0.5, 64, rng)
        ok &= all(l_prime(truth, truth, batch.sample(i)) == 0.0 for i in range(batch.size))
    record("criterion-10", ok, f"worst identity gap {worst:.2e}")


def test_criterion_11_endpoint_bounds():
    """Measured W2(q, q_gamma) and TV(q_T, N(0,1)) within the closed-form bounds."""
    n = 100_000
    gamma = 0.02
    std = IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [1.0])
    ok = True
    details = []
    for name, g in catalog_mixtures("full"):
        if g.dim != 1:
            continue
        m2 = g.second_moment_sqrt()
        w2_bound = gamma * m2 + math.sqrt(2 * gamma)
        a = g.sample(substream(111, "acc11_a", name), n)
        b = g.smooth(gamma).sample(substream(112, "acc11_b", name), n)
        w2 = w2_empirical_1d(a, b).value
        ok &= w2 <= w2_bound
        tv_ok = True
        for T in (3.0, 5.0):
            tv = tv_quadrature_1d(g.smooth(T), std).value
            tv_ok &= tv <= 10.0 * math.exp(-T) * m2
        ok &= tv_ok
        details.append(f"{name}: W2 {w2:.3f} <= {w2_bound:.3f}, TV ok {tv_ok}")
    record("criterion-11", ok, "; ".join(details))


def test_criterion_12_bitwise_reproducibility(tmp_path):
    """Replaying any manifest reproduces rows.csv exactly, across thread counts."""
    configs = [
        {"experiment": "schedule_compare", "seed": 21, "sweep": [20], "n_paths": 2000},
        {"experiment": "hard_instance", "seed": 22, "trials": 10, "m_sweep": [50], "n_eval": 1000},
        {"experiment": "verify_lemmas", "seed": 23, "trials": 200, "catalog": "gaussian"},
        {"experiment": "girsanov_budget", "seed": 24, "sweep": [50, 100], "n_mc": 50},
    ]
    ok = True
    for cfg in configs:
        res = run_experiment(cfg)
        out = res.write(tmp_path / cfg["experiment"])
        manifest = json.loads((out / "manifest.json").read_text())
        replay = run_experiment(dict(manifest["config"]))
        ok &= replay.rows_csv_bytes() == (out / "rows.csv").read_bytes()

    # Thread-count independence: replay under different BLAS/OMP settings.
    target = tmp_path / "hard_instance" / "rows.csv"
    for threads in ("1", "4"):
        env = dict(os.environ)
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            env[var] = threads
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "scorelab.cli",
                "replay",
                "--manifest",
                str(tmp_path / "hard_instance" / "manifest.json"),
                "--out",
                str(tmp_path / f"replay_{threads}"),
            ],
            capture_output=True,
            text=True,
            env=env,
        )
        ok &= proc.returncode == 0
        ok &= (tmp_path / f"replay_{threads}" / "rows.csv").read_bytes() == target.read_bytes()
    record("criterion-12", ok, "4 experiment manifests replayed byte-identically, threads {1, 4}")

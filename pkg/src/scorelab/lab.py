"""Configuration-driven experiment runner with seeded reproducibility.

Every experiment is a pure function of its resolved configuration: the same
config (including seed) reproduces rows.csv byte for byte, regardless of
where or when it runs. Manifests echo the fully resolved config so any run
can be replayed from its output directory alone.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from scorelab import __version__
from scorelab.estimation import (
    HypothesisClass,
    build_info_theoretic_pair,
    build_score_matching_lower_bound_instance,
    draw_smoothed_batch,
    erm,
    error_report,
)
from scorelab.forward import (
    verify_local_lipschitz,
    verify_max_deviation,
    verify_score_norm_subgaussian,
    verify_single_step_discretization,
    verify_smoothing_drift,
)
from scorelab.metrics import tv_binned, w2_empirical_1d
from scorelab.mixtures import IsotropicGaussianMixture
from scorelab.rng import substream
from scorelab.sampler import AnalyticScore, run_sampler
from scorelab.schedules import adaptive_schedule, constant_schedule, kl_budget, linear_schedule

FORMAT_VERSION = 1


class ConfigError(ValueError):
    """Raised for invalid or unknown experiment configuration."""


# ----------------------------------------------------------------------
# Presets and catalog
# ----------------------------------------------------------------------

def preset_mixture(name: str, **params) -> IsotropicGaussianMixture:
    """Named mixtures used across the experiments."""
    if name == "two_gaussian":
        r = params.get("r", 0.5)
        rho = params.get("rho", 0.01)
        return IsotropicGaussianMixture.from_weights([0.5, 0.5], [[-r], [r]], [rho**2, rho**2])
    if name == "single_gaussian":
        rho = params.get("rho", 0.5)
        return IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [rho**2])
    if name == "std_normal":
        return IsotropicGaussianMixture.from_weights([1.0], [[0.0]], [1.0])
    if name == "hard_info":
        pair = build_info_theoretic_pair(params.get("eta", 0.001), params.get("R", 10000.0), params.get("sigma", 1.0))
        return pair.p1
    if name == "hard_sm":
        # Valid-regime defaults; S below ~20 sqrt(log m) is rejected upstream.
        inst = build_score_matching_lower_bound_instance(
            params.get("S", 80.0), params.get("m", 10000), params.get("sigma", 1.0)
        )
        return inst.p_hat
    if name == "mix2d":
        return IsotropicGaussianMixture.from_weights(
            [0.7, 0.3], [[-1.0, 0.0], [1.0, 0.5]], [0.09, 0.04]
        )
    raise ConfigError(f"unknown mixture preset {name!r}")


def resolve_mixture(spec) -> tuple[IsotropicGaussianMixture, str]:
    """Accept a preset name, a preset dict, or an inline component spec."""
    if isinstance(spec, str):
        return preset_mixture(spec), spec
    if isinstance(spec, dict) and "preset" in spec:
        params = {k: v for k, v in spec.items() if k != "preset"}
        return preset_mixture(spec["preset"], **params), spec["preset"]
    if isinstance(spec, dict) and "components" in spec:
        return IsotropicGaussianMixture.from_dict(spec), "inline"
    raise ConfigError(f"cannot resolve mixture spec {spec!r}")


CATALOG = ("std_normal", "single_gaussian", "two_gaussian", "mix2d")
GAUSSIAN_CATALOG = ("std_normal", "single_gaussian")


def catalog_mixtures(which: str = "full"):
    names = GAUSSIAN_CATALOG if which == "gaussian" else CATALOG
    out = []
    for name in names:
        params = {"rho": 0.1} if name == "single_gaussian" else {}
        out.append((name, preset_mixture(name, **params)))
    return out


# ----------------------------------------------------------------------
# Results and persistence
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentResult:
    experiment: str
    columns: tuple
    rows: list
    manifest: dict

    def rows_csv_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_csv_cell(row[c]) for c in self.columns])
        return buf.getvalue().encode("utf-8")

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rows.csv").write_bytes(self.rows_csv_bytes())
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        return out


def _csv_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _base_manifest(experiment: str, config: dict, started: float) -> dict:
    return {
        "format": FORMAT_VERSION,
        "artifact_version": __version__,
        "experiment": experiment,
        "config": config,
        "wall_time_s": round(time.time() - started, 3),
    }


# ----------------------------------------------------------------------
# Config resolution
# ----------------------------------------------------------------------

DEFAULTS = {
    "schedule_compare": {
        "mixture": "two_gaussian",
        "T": 3.0,
        "gamma": 0.01,
        "sweep": [20, 50, 100, 200, 400],
        "n_paths": 40000,
        "bins": 64,
        "kinds": ["adaptive", "constant", "linear"],
    },
    "hard_instance": {
        "eta": 0.001,
        "R": 10000.0,
        "sigma": 1.0,
        "delta": 0.01,
        "m_sweep": [10, 50, 100, 500, 1000, 5000],
        "trials": 200,
        "n_eval": 10000,
        "threshold": 1.0,
    },
    "verify_lemmas": {
        "catalog": "full",
        "trials": 4000,
        "delta": 0.1,
        "ceiling": 10.0,
    },
    "girsanov_budget": {
        "mixture": "two_gaussian",
        "T": 3.0,
        "gamma": 0.01,
        "sweep": [50, 100, 200, 400, 800],
        "n_mc": 200,
        "sub_grid": 8,
    },
}


def resolve_config(config: dict) -> dict:
    """Validate and fill defaults; rejects unknown names before any work."""
    if "experiment" not in config:
        raise ConfigError("config must name an experiment")
    name = config["experiment"]
    if name not in DEFAULTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {sorted(DEFAULTS)}")
    resolved = dict(DEFAULTS[name])
    allowed = set(resolved) | {"experiment", "seed"}
    for key, value in config.items():
        if key == "experiment":
            continue
        if key not in allowed:
            raise ConfigError(f"unknown config key {key!r} for {name}; expected one of {sorted(allowed)}")
        resolved[key] = value
    resolved["experiment"] = name
    resolved.setdefault("seed", 0)
    resolved["seed"] = int(resolved["seed"])
    _validate_common(resolved)
    return resolved


def _validate_common(cfg: dict) -> None:
    for key in ("delta",):
        if key in cfg and not 0 < cfg[key] < 1:
            raise ConfigError(f"{key} must be in (0, 1), got {cfg[key]}")
    if "gamma" in cfg and not 0 < cfg["gamma"] < 1:
        raise ConfigError(f"gamma must be in (0, 1), got {cfg['gamma']}")
    for key in ("trials", "n_paths", "n_eval", "n_mc"):
        if key in cfg and int(cfg[key]) < 1:
            raise ConfigError(f"{key} must be >= 1, got {cfg[key]}")
    for key in ("sweep", "m_sweep"):
        if key in cfg and (not cfg[key] or any(int(v) < 1 for v in cfg[key])):
            raise ConfigError(f"{key} must be a non-empty list of positive ints")


def run_experiment(config: dict) -> ExperimentResult:
    cfg = resolve_config(config)
    runner = {
        "schedule_compare": cmd_schedule_compare,
        "hard_instance": cmd_hard_instance,
        "verify_lemmas": cmd_verify_lemmas,
        "girsanov_budget": cmd_girsanov_budget,
    }[cfg["experiment"]]
    return runner(cfg)


# ----------------------------------------------------------------------
# schedule_compare
# ----------------------------------------------------------------------

def _build_schedule(kind: str, T: float, gamma: float, n: int):
    if kind == "adaptive":
        return adaptive_schedule(T, gamma, n)
    if kind == "constant":
        return constant_schedule(T, gamma, n)
    if kind == "linear":
        return linear_schedule(T, gamma, n)
    raise ConfigError(f"unknown schedule kind {kind!r}")


def cmd_schedule_compare(cfg: dict) -> ExperimentResult:
    """Terminal accuracy of each schedule kind at matched realized step counts.

    For each sweep budget N the adaptive rule fixes the realized step count,
    and the constant and linear schedules are built with that same count, so
    rows sharing a budget are directly comparable. W2 is measured against a
    reference sample of the analytic law at each schedule's own terminal
    time, drawn from a substream shared across kinds.
    """
    started = time.time()
    mixture, mix_name = resolve_mixture(cfg["mixture"])
    if mixture.dim != 1:
        raise ConfigError("schedule_compare requires a one-dimensional mixture")
    model = AnalyticScore(mixture)
    seed = cfg["seed"]
    n_paths = int(cfg["n_paths"])
    rows = []
    for n_budget in [int(v) for v in cfg["sweep"]]:
        adaptive = _build_schedule("adaptive", cfg["T"], cfg["gamma"], n_budget)
        realized = adaptive.n_steps
        schedules = [("adaptive", adaptive)]
        for kind in cfg["kinds"]:
            if kind != "adaptive":
                schedules.append((kind, _build_schedule(kind, cfg["T"], cfg["gamma"], realized)))
        reference_rng = {}
        for kind, schedule in schedules:
            rng = substream(seed, "schedule_compare", kind, n_budget)
            out = run_sampler(schedule, model, n_paths, rng, init="standard_normal", q0=mixture)
            terminal = schedule.terminal_time
            key = round(terminal, 15)
            if key not in reference_rng:
                ref_stream = substream(seed, "schedule_compare", "reference", n_budget, str(key))
                reference_rng[key] = mixture.smooth(terminal).sample(ref_stream, n_paths)
            reference = reference_rng[key]
            w2 = w2_empirical_1d(out.samples, reference).value
            tv = tv_binned(out.samples, mixture.smooth(terminal), int(cfg["bins"])).value
            rows.append(
                {
                    "kind": kind,
                    "N_requested": n_budget,
                    "steps_realized": schedule.n_steps,
                    "terminal_time": terminal,
                    "w2_terminal": w2,
                    "tv_binned": tv,
                    "kl_budget": kl_budget(schedule),
                }
            )
    manifest = _base_manifest("schedule_compare", cfg, started)
    manifest["mixture"] = mixture.to_dict()
    manifest["mixture_name"] = mix_name
    columns = ("kind", "N_requested", "steps_realized", "terminal_time", "w2_terminal", "tv_binned", "kl_budget")
    return ExperimentResult("schedule_compare", columns, rows, manifest)


# ----------------------------------------------------------------------
# hard_instance
# ----------------------------------------------------------------------

def cmd_hard_instance(cfg: dict) -> ExperimentResult:
    """ERM failure rates on the mirror-spike pair, per training-set size.

    Each trial draws m training triples from p1 in direct smoothed
    coordinates (y an atom of {0, -R}, z ~ N(0, sigma^2), x = y + z), runs
    the two-member ERM, and scores the selected hypothesis against the
    data-generating score in both the L2 and the (1 - delta)-quantile sense.
    Ties in the loss table resolve to the lexicographically lowest label; the
    alternative hypothesis is labeled to win ties, which realizes the
    adversarial resolution that exactly tied losses leave open.
    """
    started = time.time()
    trials = int(cfg["trials"])
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {cfg['trials']}")
    pair = build_info_theoretic_pair(cfg["eta"], cfg["R"], cfg["sigma"])
    hypotheses = HypothesisClass((pair.s2, pair.s1), ("alt", "ref"))
    truth = pair.s1
    atoms = np.array([[0.0], [-pair.R]])
    atom_weights = np.array([1.0 - pair.eta, pair.eta])
    threshold = float(cfg["threshold"])
    delta = float(cfg["delta"])
    n_eval = int(cfg["n_eval"])
    seed = cfg["seed"]
    rows = []
    for m in [int(v) for v in cfg["m_sweep"]]:
        l2_fail = 0
        quant_fail = 0
        l2_values = []
        quant_values = []
        for trial in range(trials):
            rng = substream(seed, "hard_instance", m, trial)
            batch = draw_smoothed_batch(atoms, atom_weights, pair.sigma, m, rng)
            label, _ = erm(hypotheses, batch)
            selected = hypotheses.members[hypotheses.labels.index(label)]
            report = error_report(selected, truth, pair.p1, delta, n_eval, rng)
            l2_values.append(report.l2_sq)
            quant_values.append(report.quantile_eps)
            l2_fail += report.l2_sq > threshold
            quant_fail += report.quantile_eps > threshold
        rows.append(
            {
                "m": m,
                "trials": trials,
                "l2_fail_frac": l2_fail / trials,
                "quantile_fail_frac": quant_fail / trials,
                "mean_l2_sq": float(np.mean(l2_values)),
                "mean_quantile_eps": float(np.mean(quant_values)),
            }
        )
    manifest = _base_manifest("hard_instance", cfg, started)
    columns = ("m", "trials", "l2_fail_frac", "quantile_fail_frac", "mean_l2_sq", "mean_quantile_eps")
    return ExperimentResult("hard_instance", columns, rows, manifest)


# ----------------------------------------------------------------------
# verify_lemmas
# ----------------------------------------------------------------------

VERIFIER_GRID = (
    ("max_deviation", {"t_k": 0.5, "h": 0.01}),
    ("score_norm_subgaussian", {"t": 1.0}),
    ("score_norm_subgaussian", {"t": 0.05}),
    ("local_lipschitz", {"t": 1.0, "radius_scale": 0.5}),
    ("smoothing_drift", {"t_k": 0.5, "eta": 0.01}),
    ("single_step_discretization", {"t_k": 1.0, "epsilon": 0.25}),
)


def _run_verifier(name: str, mixture, params: dict, trials: int, delta: float, rng, seed):
    if name == "max_deviation":
        return verify_max_deviation(mixture, params["t_k"], params["h"], trials, delta, rng, seed)
    if name == "score_norm_subgaussian":
        return verify_score_norm_subgaussian(mixture, params["t"], trials, delta, rng, seed)
    if name == "local_lipschitz":
        return verify_local_lipschitz(mixture, params["t"], params["radius_scale"], trials, delta, rng, seed)
    if name == "smoothing_drift":
        return verify_smoothing_drift(mixture, params["t_k"], params["eta"], trials, delta, rng, seed)
    if name == "single_step_discretization":
        return verify_single_step_discretization(mixture, params["t_k"], params["epsilon"], trials, delta, rng, seed)
    raise ConfigError(f"unknown verifier {name!r}")


def cmd_verify_lemmas(cfg: dict) -> ExperimentResult:
    """Run every verifier over the mixture catalog; one row per report."""
    started = time.time()
    trials = int(cfg["trials"])
    delta = float(cfg["delta"])
    seed = cfg["seed"]
    rows = []
    worst = 0.0
    for mix_name, mixture in catalog_mixtures(cfg["catalog"]):
        for verifier, params in VERIFIER_GRID:
            rng = substream(seed, "verify_lemmas", mix_name, verifier, json.dumps(params, sort_keys=True))
            report = _run_verifier(verifier, mixture, params, trials, delta, rng, seed)
            worst = max(worst, report.empirical_constant)
            rows.append(
                {
                    "lemma_id": report.lemma_id,
                    "mixture": mix_name,
                    "dim": mixture.dim,
                    "params": json.dumps(params, sort_keys=True),
                    "trials": report.trials,
                    "delta": report.delta,
                    "empirical_quantile": report.empirical_quantile,
                    "bound_form": report.bound_form,
                    "empirical_constant": report.empirical_constant,
                    "seed": seed,
                }
            )
    manifest = _base_manifest("verify_lemmas", cfg, started)
    manifest["worst_constant"] = worst
    manifest["ceiling"] = float(cfg["ceiling"])
    manifest["passed"] = worst <= float(cfg["ceiling"])
    columns = (
        "lemma_id",
        "mixture",
        "dim",
        "params",
        "trials",
        "delta",
        "empirical_quantile",
        "bound_form",
        "empirical_constant",
        "seed",
    )
    return ExperimentResult("verify_lemmas", columns, rows, manifest)


# ----------------------------------------------------------------------
# girsanov_budget
# ----------------------------------------------------------------------

def pathwise_discretization_functional(
    mixture: IsotropicGaussianMixture,
    schedule,
    n_mc: int,
    rng: np.random.Generator,
    sub_grid: int = 8,
) -> float:
    """MC estimate of sum_k E int_{t_{k+1}}^{t_k} ||s_{t_k}(X_{t_k}) - s_t(X_t)||^2 dt.

    Each step is estimated independently: start the forward process at the
    step's lower time from the exact marginal, walk the exact OU kernel to
    the step's upper time on a sub-grid, and integrate the squared score gap
    along the trajectory by the trapezoid rule.
    """
    from scorelab.forward import ou_transition

    total = 0.0
    times = schedule.times
    for k in range(schedule.n_steps):
        t_hi, t_lo = float(times[k]), float(times[k + 1])
        grid = np.linspace(t_lo, t_hi, sub_grid)
        x = mixture.smooth(t_lo).sample(rng, n_mc)
        states = [x]
        for j in range(sub_grid - 1):
            states.append(ou_transition(states[-1], float(grid[j + 1] - grid[j]), rng))
        score_end = mixture.smooth(t_hi).score(states[-1])
        gaps = np.stack(
            [np.sum((score_end - mixture.smooth(float(t)).score(s)) ** 2, axis=1) for t, s in zip(grid, states)]
        )
        total += float(np.mean(np.trapezoid(gaps, grid, axis=0)))
    return total


def cmd_girsanov_budget(cfg: dict) -> ExperimentResult:
    """Pathwise discretization functional vs step budget, with log-log slope."""
    started = time.time()
    mixture, mix_name = resolve_mixture(cfg["mixture"])
    if mixture.dim != 1:
        raise ConfigError("girsanov_budget requires a one-dimensional mixture")
    seed = cfg["seed"]
    rows = []
    for n_budget in [int(v) for v in cfg["sweep"]]:
        schedule = adaptive_schedule(cfg["T"], cfg["gamma"], n_budget)
        rng = substream(seed, "girsanov_budget", n_budget)
        value = pathwise_discretization_functional(mixture, schedule, int(cfg["n_mc"]), rng, int(cfg["sub_grid"]))
        rows.append(
            {
                "N_requested": n_budget,
                "steps_realized": schedule.n_steps,
                "functional": value,
            }
        )
    logs_n = np.log([row["N_requested"] for row in rows])
    logs_f = np.log([row["functional"] for row in rows])
    slope = float(np.polyfit(logs_n, logs_f, 1)[0]) if len(rows) >= 2 else float("nan")
    manifest = _base_manifest("girsanov_budget", cfg, started)
    manifest["mixture"] = mixture.to_dict()
    manifest["mixture_name"] = mix_name
    manifest["loglog_slope"] = slope
    columns = ("N_requested", "steps_realized", "functional")
    return ExperimentResult("girsanov_budget", columns, rows, manifest)

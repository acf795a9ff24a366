import json
import subprocess
import sys

import numpy as np
import pytest

from scorelab.lab import (
    ConfigError,
    catalog_mixtures,
    preset_mixture,
    resolve_config,
    resolve_mixture,
    run_experiment,
)


class TestConfig:
    def test_rejects_unknown_experiment(self):
        with pytest.raises(ConfigError, match="unknown experiment"):
            resolve_config({"experiment": "nope"})

    def test_rejects_missing_experiment(self):
        with pytest.raises(ConfigError):
            resolve_config({})

    def test_rejects_bad_delta(self):
        with pytest.raises(ConfigError, match="delta"):
            resolve_config({"experiment": "hard_instance", "delta": 1.5})

    def test_rejects_bad_gamma(self):
        with pytest.raises(ConfigError, match="gamma"):
            resolve_config({"experiment": "schedule_compare", "gamma": 0.0})

    def test_rejects_empty_sweep(self):
        with pytest.raises(ConfigError, match="sweep"):
            resolve_config({"experiment": "girsanov_budget", "sweep": []})

    def test_rejects_zero_trials(self):
        with pytest.raises(ConfigError, match="trials"):
            run_experiment({"experiment": "hard_instance", "trials": 0})

    def test_defaults_filled(self):
        cfg = resolve_config({"experiment": "verify_lemmas"})
        assert cfg["trials"] == 4000
        assert cfg["seed"] == 0

    def test_rejects_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            resolve_config({"experiment": "verify_lemmas", "trails": 100})


class TestPresets:
    def test_two_gaussian(self):
        g = preset_mixture("two_gaussian")
        np.testing.assert_allclose(g.means[:, 0], [-0.5, 0.5])
        np.testing.assert_allclose(g.variances, 1e-4)

    def test_single_gaussian_param(self):
        g = preset_mixture("single_gaussian", rho=0.1)
        assert g.variances[0] == pytest.approx(0.01)

    def test_hard_info(self):
        g = preset_mixture("hard_info", eta=0.01, R=100.0)
        assert g.weights[1] == pytest.approx(0.01)

    def test_hard_sm(self):
        g = preset_mixture("hard_sm", S=80.0, m=10_000)
        assert g.means[1, 0] == pytest.approx(80.0)
        assert g.log_weights[0] < -700
        with pytest.raises(ValueError, match="S=40"):
            preset_mixture("hard_sm", S=40.0, m=10_000)

    def test_resolve_inline(self):
        g, name = resolve_mixture({"dim": 1, "components": [{"w": 1.0, "mean": [0.0], "var": 2.0}]})
        assert name == "inline" and g.variances[0] == 2.0

    def test_resolve_rejects_garbage(self):
        with pytest.raises(ConfigError):
            resolve_mixture(42)

    def test_catalog(self):
        full = catalog_mixtures("full")
        assert [name for name, _ in full] == ["std_normal", "single_gaussian", "two_gaussian", "mix2d"]
        assert len(catalog_mixtures("gaussian")) == 2


class TestExperiments:
    def test_schedule_compare_rows(self):
        res = run_experiment(
            {"experiment": "schedule_compare", "seed": 1, "sweep": [20], "n_paths": 4000}
        )
        kinds = {r["kind"] for r in res.rows}
        assert kinds == {"adaptive", "constant", "linear"}
        realized = {r["steps_realized"] for r in res.rows}
        assert len(realized) == 1  # matched step counts
        for r in res.rows:
            assert r["w2_terminal"] >= 0 and 0 <= r["tv_binned"] <= 1

    def test_hard_instance_rows(self):
        res = run_experiment(
            {"experiment": "hard_instance", "seed": 1, "trials": 40, "m_sweep": [10, 1000], "n_eval": 10_000}
        )
        by_m = {r["m"]: r for r in res.rows}
        assert by_m[10]["l2_fail_frac"] > by_m[1000]["l2_fail_frac"]
        assert all(r["quantile_fail_frac"] <= 0.05 for r in res.rows)

    def test_verify_lemmas_rows_and_ceiling(self):
        res = run_experiment({"experiment": "verify_lemmas", "seed": 1, "trials": 500})
        assert len(res.rows) == 6 * len(catalog_mixtures("full"))
        assert res.manifest["worst_constant"] <= 10
        assert res.manifest["passed"]
        res_gauss = run_experiment(
            {"experiment": "verify_lemmas", "seed": 1, "trials": 500, "catalog": "gaussian"}
        )
        assert res_gauss.manifest["worst_constant"] <= 2.0 * 1.5

    def test_girsanov_budget_slope(self):
        res = run_experiment(
            {"experiment": "girsanov_budget", "seed": 1, "sweep": [50, 100, 200], "n_mc": 100}
        )
        assert -1.5 <= res.manifest["loglog_slope"] <= -0.6

    def test_girsanov_budget_reference_ceiling(self):
        res = run_experiment(
            {"experiment": "girsanov_budget", "seed": 5, "sweep": [400], "n_mc": 200, "T": 3.0, "gamma": 0.01}
        )
        assert res.rows[0]["functional"] <= 0.5

    def test_girsanov_budget_monotone_in_horizon(self):
        small = run_experiment(
            {"experiment": "girsanov_budget", "seed": 2, "sweep": [100], "n_mc": 200, "T": 2.0, "gamma": 0.05}
        )
        big = run_experiment(
            {"experiment": "girsanov_budget", "seed": 2, "sweep": [100], "n_mc": 200, "T": 4.0, "gamma": 0.005}
        )
        assert big.rows[0]["functional"] > small.rows[0]["functional"]


class TestReproducibility:
    def test_rows_bytes_identical(self):
        cfg = {"experiment": "hard_instance", "seed": 9, "trials": 20, "m_sweep": [50], "n_eval": 10_000}
        a = run_experiment(cfg).rows_csv_bytes()
        b = run_experiment(cfg).rows_csv_bytes()
        assert a == b

    def test_write_and_manifest(self, tmp_path):
        cfg = {"experiment": "girsanov_budget", "seed": 4, "sweep": [50], "n_mc": 50}
        res = run_experiment(cfg)
        out = res.write(tmp_path / "run")
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["experiment"] == "girsanov_budget"
        assert manifest["config"]["seed"] == 4
        fresh = run_experiment(dict(manifest["config"]))
        assert fresh.rows_csv_bytes() == (out / "rows.csv").read_bytes()

    def test_seed_changes_rows(self):
        base = {"experiment": "hard_instance", "trials": 20, "m_sweep": [50], "n_eval": 10_000}
        a = run_experiment({**base, "seed": 1}).rows_csv_bytes()
        b = run_experiment({**base, "seed": 2}).rows_csv_bytes()
        assert a != b


class TestCli:
    def run_cli(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "scorelab.cli", *args],
            capture_output=True,
            text=True,
        )

    def test_run_and_replay(self, tmp_path):
        config = tmp_path / "cfg.toml"
        config.write_text(
            'seed = 5\nsweep = [50]\nn_mc = 50\n'
        )
        out = self.run_cli(
            "girsanov-budget", "--config", str(config), "--out", str(tmp_path / "runs"), "--tag", "t1"
        )
        assert out.returncode == 0, out.stderr
        run_dir = tmp_path / "runs" / "girsanov_budget" / "t1"
        assert (run_dir / "rows.csv").exists()
        replay = self.run_cli("replay", "--manifest", str(run_dir / "manifest.json"))
        assert replay.returncode == 0, replay.stderr
        assert "byte for byte" in replay.stdout

    def test_json_config(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"seed": 3, "trials": 10, "m_sweep": [20], "n_eval": 1000}))
        out = self.run_cli(
            "hard-instance", "--config", str(config), "--out", str(tmp_path / "runs"), "--tag", "t2"
        )
        assert out.returncode == 0, out.stderr

    def test_config_output_dir_and_tag(self, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(
            json.dumps(
                {
                    "seed": 3,
                    "trials": 5,
                    "m_sweep": [20],
                    "n_eval": 1000,
                    "output_dir": str(tmp_path / "from_config"),
                    "tag": "cfg_tag",
                }
            )
        )
        out = self.run_cli("hard-instance", "--config", str(config))
        assert out.returncode == 0, out.stderr
        assert (tmp_path / "from_config" / "hard_instance" / "cfg_tag" / "rows.csv").exists()

    def test_ceiling_flag_forces_failure(self, tmp_path):
        config = tmp_path / "cfg.toml"
        config.write_text("trials = 200\ncatalog = \"gaussian\"\n")
        out = self.run_cli(
            "verify-lemmas",
            "--config", str(config),
            "--seed", "1",
            "--ceiling", "0",
            "--out", str(tmp_path / "runs"),
            "--tag", "t3",
        )
        assert out.returncode == 1

    def test_unknown_config_file(self, tmp_path):
        out = self.run_cli("verify-lemmas", "--config", str(tmp_path / "missing.toml"))
        assert out.returncode == 2

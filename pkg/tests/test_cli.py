import csv

import numpy as np
import pytest
import yaml

from trsvi.cli import main
from trsvi.config import ConfigError, validate_config
from trsvi.experiment import TRACE_COLUMNS, export_marginals, run_experiment
from trsvi.model import load_problem, load_samples_csv


def tiny_config(**overrides):
    cfg = {
        "problem": {"kind": "bayes_net", "layer_sizes": [2, 2],
                    "max_parents": 2, "gmm_nodes": 1, "seed": 5},
        "kernel": {"lengthscale": 1.0},
        "method": [
            {"name": "tr-svi-at", "iterations": 5},
            {"name": "mp-svgd-dlr", "iterations": 8, "step": 0.05,
             "decay": 0.99},
        ],
        "run": {"particles": 12, "seeds": [0, 1]},
        "output": {"ground_truth": {"samples": 400}, "mmd": True},
    }
    cfg.update(overrides)
    return cfg


class TestConfigValidation:
    def test_missing_problem_section(self):
        with pytest.raises(ConfigError, match="problem"):
            validate_config({"method": [{"name": "svgd"}]})

    def test_bad_layer_sizes_path_in_message(self):
        cfg = tiny_config()
        cfg["problem"]["layer_sizes"] = [2, 0]
        with pytest.raises(ConfigError, match=r"problem\.layer_sizes\[1\]"):
            validate_config(cfg)

    def test_unknown_method_name(self):
        cfg = tiny_config()
        cfg["method"].append({"name": "mystery"})
        with pytest.raises(ConfigError, match=r"method\[2\]\.name"):
            validate_config(cfg)

    def test_duplicate_labels_rejected(self):
        cfg = tiny_config()
        cfg["method"] = [{"name": "svgd"}, {"name": "svgd"}]
        with pytest.raises(ConfigError, match="label"):
            validate_config(cfg)

    def test_single_method_mapping_allowed(self):
        cfg = tiny_config()
        cfg["method"] = {"name": "tr-svi-at", "iterations": 3}
        validated = validate_config(cfg)
        assert validated["method"][0]["label"] == "tr-svi-at"

    def test_mmd_requires_ground_truth(self):
        cfg = tiny_config()
        cfg["output"] = {"mmd": True}
        with pytest.raises(ConfigError, match=r"output\.mmd"):
            validate_config(cfg)

    def test_defaults_are_filled(self):
        validated = validate_config(tiny_config())
        assert validated["output"]["mmd_subsample_cap"] == 20_000
        assert validated["run"]["particles"] == 12


@pytest.fixture(scope="module")
def artifact(tmp_path_factory):
    out = tmp_path_factory.mktemp("artifacts") / "run"
    return run_experiment(tiny_config(), out)


class TestRunExperiment:
    def test_layout_of_artifact(self, artifact):
        for name in ("manifest.yaml", "problem.yaml", "ground_truth.csv",
                     "metrics.yaml", "timings.csv"):
            assert (artifact / name).exists()
        for label in ("tr-svi-at", "mp-svgd-dlr"):
            for seed in (0, 1):
                run_dir = artifact / "runs" / label / f"seed_{seed}"
                assert (run_dir / "trace.csv").exists()
                assert (run_dir / "final.csv").exists()
        for seed in (0, 1):
            assert (artifact / "inits" / f"seed_{seed}.csv").exists()

    def test_trace_schema(self, artifact):
        path = artifact / "runs" / "tr-svi-at" / "seed_0" / "trace.csv"
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert len(rows) == 6     # header + 5 iterations
        first = dict(zip(rows[0], rows[1]))
        assert first["iteration"] == "0"
        assert float(first["gradient_magnitude"]) > 0
        assert first["rho"] == ""             # not a KL-driver column
        assert first["accepted"] == "true"
        assert first["wall_ms"] == ""         # kept empty for reproducibility

    def test_kl_trace_fills_rho_columns(self, tmp_path):
        cfg = tiny_config()
        cfg["method"] = [{"name": "tr-svi-kl", "iterations": 4}]
        artifact = run_experiment(cfg, tmp_path / "kl")
        path = artifact / "runs" / "tr-svi-kl" / "seed_0" / "trace.csv"
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert all(r["rho"] != "" for r in rows)
        assert all(r["approx_kl_u"] != "" for r in rows)
        assert all(r["accepted"] in ("true", "false") for r in rows)

    def test_manifest_records_every_tunable(self, artifact):
        manifest = yaml.safe_load((artifact / "manifest.yaml").read_text())
        assert manifest["kernel"]["lengthscale"] == 1.0
        assert manifest["run"]["particles"] == 12
        assert manifest["run"]["seeds"] == [0, 1]
        assert manifest["run"]["resolved_init_scale"] == 1.0
        assert manifest["output"]["mmd_subsample_cap"] == 20_000
        assert manifest["output"]["median_heuristic_subsample_cap"] == 10_000
        dlr = next(m for m in manifest["method"] if m["name"] == "mp-svgd-dlr")
        assert dlr["step"] == 0.05 and dlr["decay"] == 0.99
        assert manifest["problem"]["total_dim"] == 4

    def test_metrics_per_method_stats(self, artifact):
        metrics = yaml.safe_load((artifact / "metrics.yaml").read_text())
        assert metrics["metric"] == "mmd"
        assert set(metrics["methods"]) == {"tr-svi-at", "mp-svgd-dlr"}
        for stats in metrics["methods"].values():
            assert len(stats["per_seed"]) == 2
            assert stats["mean"] == pytest.approx(np.mean(stats["per_seed"]))

    def test_zero_iterations_snapshot_only(self, tmp_path):
        cfg = tiny_config()
        cfg["method"] = [{"name": "tr-svi-at", "iterations": 0}]
        cfg["output"] = {}
        artifact = run_experiment(cfg, tmp_path / "snap")
        init, _ = load_samples_csv(artifact / "inits" / "seed_0.csv")
        final, _ = load_samples_csv(
            artifact / "runs" / "tr-svi-at" / "seed_0" / "final.csv"
        )
        np.testing.assert_array_equal(init, final)
        assert yaml.safe_load((artifact / "manifest.yaml").read_text())

    def test_failure_removes_partial_outputs(self, tmp_path):
        cfg = tiny_config()
        cfg["kernel"]["lengthscale"] = "median"
        cfg["output"]["ground_truth"]["samples"] = 1   # degenerate median
        out = tmp_path / "broken"
        with pytest.raises(Exception):
            run_experiment(cfg, out)
        assert not out.exists()

    def test_refuses_nonempty_output_dir(self, tmp_path):
        out = tmp_path / "busy"
        out.mkdir()
        (out / "keep.txt").write_text("hi")
        with pytest.raises(ConfigError, match="not empty"):
            run_experiment(tiny_config(), out)
        assert (out / "keep.txt").exists()

    def test_seed_override_runs_single_seed(self, tmp_path):
        artifact = run_experiment(tiny_config(), tmp_path / "single",
                                  seed_override=7)
        assert (artifact / "runs" / "tr-svi-at" / "seed_7").exists()
        assert not (artifact / "runs" / "tr-svi-at" / "seed_0").exists()

    def test_problem_from_spec_file(self, artifact, tmp_path):
        cfg = tiny_config()
        cfg["problem"] = {"kind": "file",
                          "path": str(artifact / "problem.yaml")}
        cfg["method"] = [{"name": "svgd", "iterations": 2, "step": 0.05}]
        cfg["output"] = {}
        rerun = run_experiment(cfg, tmp_path / "fromfile")
        assert (rerun / "problem.yaml").read_bytes() == \
            (artifact / "problem.yaml").read_bytes()

    def test_binary_ground_truth_used_when_present(self, tmp_path):
        cfg = tiny_config()
        cfg["output"]["binary_samples"] = True
        artifact = run_experiment(cfg, tmp_path / "bin")
        assert (artifact / "ground_truth.bin").exists()
        metrics = yaml.safe_load((artifact / "metrics.yaml").read_text())
        assert set(metrics["methods"]) == {"tr-svi-at", "mp-svgd-dlr"}

    def test_worker_count_does_not_change_bytes(self, artifact, tmp_path):
        parallel = run_experiment(tiny_config(), tmp_path / "parallel",
                                  workers=3)
        for label in ("tr-svi-at", "mp-svgd-dlr"):
            for seed in (0, 1):
                for name in ("trace.csv", "final.csv"):
                    a = artifact / "runs" / label / f"seed_{seed}" / name
                    b = parallel / "runs" / label / f"seed_{seed}" / name
                    assert a.read_bytes() == b.read_bytes()


class TestMarginals:
    def test_snlp_factor_gives_two_columns(self, tmp_path):
        cfg = tiny_config()
        cfg["problem"] = {"kind": "snlp", "unknowns": 4, "anchors": 2,
                          "side": 6.0, "radius": 3.0, "noise_variance": 0.01,
                          "noiseless": True, "seed": 3}
        cfg["method"] = [{"name": "tr-svi-at", "iterations": 2}]
        cfg["output"] = {}
        artifact = run_experiment(cfg, tmp_path / "snlp")
        samples_csv = artifact / "runs" / "tr-svi-at" / "seed_0" / "final.csv"
        paths = export_marginals(samples_csv, artifact / "problem.yaml", [1],
                                 tmp_path / "marginals")
        data, names = load_samples_csv(paths[0])
        assert names == ["s1_x", "s1_y"]
        assert data.shape == (12, 2)

    def test_all_factors_reassemble_full_matrix(self, tmp_path):
        cfg = tiny_config()
        cfg["method"] = [{"name": "tr-svi-at", "iterations": 2}]
        cfg["output"] = {}
        artifact = run_experiment(cfg, tmp_path / "bn")
        samples_csv = artifact / "runs" / "tr-svi-at" / "seed_0" / "final.csv"
        full, names = load_samples_csv(samples_csv)
        problem = load_problem(artifact / "problem.yaml")
        paths = export_marginals(samples_csv, artifact / "problem.yaml",
                                 list(range(4)), tmp_path / "marg")
        rebuilt = np.hstack([load_samples_csv(p)[0] for p in paths])
        np.testing.assert_array_equal(rebuilt, full)

    def test_unknown_factor_index(self, tmp_path):
        cfg = tiny_config()
        cfg["method"] = [{"name": "tr-svi-at", "iterations": 1}]
        cfg["output"] = {}
        artifact = run_experiment(cfg, tmp_path / "oops")
        samples_csv = artifact / "runs" / "tr-svi-at" / "seed_0" / "final.csv"
        with pytest.raises(ValueError, match="factor"):
            export_marginals(samples_csv, artifact / "problem.yaml", [99],
                             tmp_path / "m")


class TestCliVerbs:
    def _write_config(self, tmp_path):
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(tiny_config()))
        return path

    def test_generate(self, tmp_path, capsys):
        cfg = self._write_config(tmp_path)
        rc = main(["generate", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "gen")])
        assert rc == 0
        assert (tmp_path / "gen" / "problem.yaml").exists()
        assert (tmp_path / "gen" / "ground_truth.csv").exists()

    def test_run_and_evaluate(self, tmp_path, capsys):
        cfg = self._write_config(tmp_path)
        rc = main(["run", "--config", str(cfg),
                   "--output-dir", str(tmp_path / "art"), "--workers", "2"])
        assert rc == 0
        rc = main(["evaluate", "--artifact", str(tmp_path / "art")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "tr-svi-at" in out and "mmd" in out

    def test_export_marginals_verb(self, tmp_path):
        cfg = self._write_config(tmp_path)
        main(["run", "--config", str(cfg),
              "--output-dir", str(tmp_path / "art2")])
        rc = main([
            "export-marginals",
            "--samples", str(tmp_path / "art2" / "runs" / "tr-svi-at"
                             / "seed_0" / "final.csv"),
            "--problem", str(tmp_path / "art2" / "problem.yaml"),
            "--factors", "0", "2",
            "--output-dir", str(tmp_path / "marg"),
        ])
        assert rc == 0
        assert (tmp_path / "marg" / "factor_0.csv").exists()
        assert (tmp_path / "marg" / "factor_2.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"problem": {"kind": "bad"}}))
        rc = main(["run", "--config", str(bad),
                   "--output-dir", str(tmp_path / "x")])
        assert rc == 2
        assert "problem.kind" in capsys.readouterr().err

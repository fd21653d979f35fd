"""End-to-end tests of the command-line interface.

Each test writes a JSON config into tmp_path and drives ``nnsig.cli.main``
in-process, asserting on exit codes and on the files the commands produce.
"""

import json

import numpy as np
import pytest

from nnsig.cli import main
from nnsig.data import TargetSpec, generate, load_csv
from nnsig.network import load as load_network
from nnsig.training import quadratic_loss, width_schedule


def write_config(tmp_path, cfg, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg), encoding="utf-8")
    return str(p)


def base_config(out_dir, n=300, d=2, beta=(1.0, 0.0), noise=0.1, seed=11):
    return {
        "seed": seed,
        "output": {"dir": str(out_dir)},
        "data": {
            "generator": {
                "kind": "linear",
                "beta": list(beta),
                "noise_sigma": noise,
                "n": n,
                "d": d,
            }
        },
        "architecture": {"width": 5},
        "training": {"epochs": 40, "batch_size": 50, "learning_rate": 0.5},
        "test": {"m": 20, "n_p": 50},
    }


class TestGenerateCommand:
    def test_writes_csv(self, tmp_path):
        cfg = base_config(tmp_path)
        assert main(["generate", "--config", write_config(tmp_path, cfg)]) == 0
        ds = load_csv(tmp_path / "dataset.csv", "y")
        assert ds.n == 300 and ds.d == 2

    def test_same_seed_byte_identical(self, tmp_path):
        blobs = []
        for sub in ("a", "b"):
            cfg = base_config(tmp_path / sub)
            assert main(["generate", "--config", write_config(tmp_path, cfg,
                                                              f"{sub}.json")]) == 0
            blobs.append((tmp_path / sub / "dataset.csv").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_override_changes_data(self, tmp_path):
        cfg = base_config(tmp_path / "x")
        path = write_config(tmp_path, cfg)
        assert main(["generate", "--config", path]) == 0
        assert main(["generate", "--config", path, "--seed", "99",
                     "--out", str(tmp_path / "z")]) == 0
        a = (tmp_path / "x" / "dataset.csv").read_bytes()
        b = (tmp_path / "z" / "dataset.csv").read_bytes()
        assert a != b

    def test_requires_generator(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["data"] = {"path": "whatever.csv"}
        assert main(["generate", "--config", write_config(tmp_path, cfg)]) == 2


class TestTrainCommand:
    def test_outputs_and_consistent_risk(self, tmp_path):
        cfg = base_config(tmp_path)
        assert main(["train", "--config", write_config(tmp_path, cfg)]) == 0
        summary = json.loads((tmp_path / "train_summary.json").read_text())
        net = load_network(tmp_path / "model.nnsig")
        # cmd_train regenerates the dataset from the config; do the same
        spec = TargetSpec(kind="linear", beta=(1.0, 0.0), noise_sigma=0.1)
        ds = generate(spec, 300, 2, seed=11)
        risk = quadratic_loss(net, ds.X, ds.y)
        assert summary["fitted"]["final_risk"] == pytest.approx(risk, abs=1e-12)
        history = (tmp_path / "loss_history.csv").read_text().strip().splitlines()
        assert history[0] == "epoch,loss"
        assert len(history) - 1 == summary["fitted"]["epochs_run"]

    def test_auto_width_uses_schedule(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["architecture"] = {"width": "auto"}
        assert main(["train", "--config", write_config(tmp_path, cfg)]) == 0
        summary = json.loads((tmp_path / "train_summary.json").read_text())
        assert summary["fitted"]["width"] == width_schedule(300)

    def test_divergence_exit_code(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["architecture"] = {"width": 5, "activation": "relu"}
        cfg["training"] = {"epochs": 20, "batch_size": 50, "learning_rate": 1e200,
                           "max_grad_norm": 1e300}
        assert main(["train", "--config", write_config(tmp_path, cfg)]) == 4


class TestTestCommand:
    def run_test(self, tmp_path, cfg, name="config.json"):
        assert main(["test", "--config", write_config(tmp_path, cfg, name)]) == 0
        return json.loads((cfg_out(cfg) / "report.json").read_text())

    def test_report_contents(self, tmp_path):
        cfg = base_config(tmp_path)
        report = self.run_test(tmp_path, cfg)
        results = report["results"]
        assert [r["variable_index"] for r in results] == [0, 1]
        for r in results:
            assert 0.0 < r["p_value"] <= 1.0
            assert len(r["null_samples"]) == 50
            assert all(v >= 0.0 for v in r["null_samples"])
        assert report["flags"]["sigma_scale"] == "raw"
        assert report["flags"]["normalization_mode"] == "identity"
        assert report["fitted"]["width"] == 5

    def test_active_vs_dead_variable(self, tmp_path):
        cfg = base_config(tmp_path, n=600, beta=(1.0, 0.0), seed=3)
        cfg["training"]["epochs"] = 120
        cfg["test"] = {"m": 50, "n_p": 200}
        report = self.run_test(tmp_path, cfg)
        p_active, p_dead = (r["p_value"] for r in report["results"])
        assert p_active <= 0.05 < p_dead

    def test_uses_saved_model_when_present(self, tmp_path):
        cfg = base_config(tmp_path)
        path = write_config(tmp_path, cfg)
        assert main(["train", "--config", path]) == 0
        assert main(["test", "--config", path]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        # loading a model skips training: the history collapses to one entry
        assert report["fitted"]["epochs_run"] == 1

    def test_rerun_bit_identical(self, tmp_path):
        cfg = base_config(tmp_path)
        path = write_config(tmp_path, cfg)
        assert main(["test", "--config", path]) == 0
        first = json.loads((tmp_path / "report.json").read_text())
        assert main(["test", "--config", path]) == 0
        second = json.loads((tmp_path / "report.json").read_text())
        assert first["results"] == second["results"]
        assert first["fitted"] == second["fitted"]

    def test_workers_bit_identical(self, tmp_path):
        cfg = base_config(tmp_path / "serial")
        assert main(["test", "--config", write_config(tmp_path, cfg, "s.json")]) == 0
        cfg_p = base_config(tmp_path / "parallel")
        cfg_p["test"]["workers"] = 4
        assert main(["test", "--config", write_config(tmp_path, cfg_p, "p.json")]) == 0
        a = json.loads((tmp_path / "serial" / "report.json").read_text())
        b = json.loads((tmp_path / "parallel" / "report.json").read_text())
        assert a["results"] == b["results"]

    def test_variable_subset_and_sidecar(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["test"]["variables"] = [1]
        cfg["test"]["null_samples_csv"] = True
        report = self.run_test(tmp_path, cfg)
        assert [r["variable_index"] for r in report["results"]] == [1]
        sidecar = (tmp_path / "null_samples_var1.csv").read_text().strip().splitlines()
        assert sidecar[0] == "sample"
        assert [float(v) for v in sidecar[1:]] == report["results"][0]["null_samples"]

    def test_variable_out_of_range(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["test"]["variables"] = [5]
        assert main(["test", "--config", write_config(tmp_path, cfg)]) == 2

    def test_csv_input_path(self, tmp_path):
        gen = base_config(tmp_path)
        assert main(["generate", "--config", write_config(tmp_path, gen, "g.json")]) == 0
        cfg = base_config(tmp_path / "from_csv")
        cfg["data"] = {"path": str(tmp_path / "dataset.csv"), "target_column": "y"}
        report = self.run_test(tmp_path, cfg, "t.json")
        assert len(report["results"]) == 2

    def test_model_dimension_mismatch(self, tmp_path):
        cfg = base_config(tmp_path)
        path = write_config(tmp_path, cfg)
        assert main(["train", "--config", path]) == 0
        cfg3 = base_config(tmp_path, d=3, beta=(1.0, 0.0, 0.0))
        assert main(["test", "--config", write_config(tmp_path, cfg3, "c3.json")]) == 3


class TestConfigErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["test", "--config", str(tmp_path / "nope.json")]) == 2

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json", encoding="utf-8")
        assert main(["test", "--config", str(p)]) == 2

    def test_both_path_and_generator(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["data"]["path"] = "x.csv"
        assert main(["test", "--config", write_config(tmp_path, cfg)]) == 2

    def test_neither_path_nor_generator(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["data"] = {}
        assert main(["test", "--config", write_config(tmp_path, cfg)]) == 2

    def test_bad_csv_exit_code(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("a,b,y\n1,2,3\n4,oops,6\n", encoding="utf-8")
        cfg = base_config(tmp_path)
        cfg["data"] = {"path": str(data)}
        assert main(["test", "--config", write_config(tmp_path, cfg)]) == 3


class TestDiagnoseCommand:
    def test_empty_sections_exit_zero(self, tmp_path):
        cfg = {"seed": 1, "output": {"dir": str(tmp_path)}, "diagnostics": {}}
        assert main(["diagnose", "--config", write_config(tmp_path, cfg)]) == 0
        payload = json.loads((tmp_path / "diagnostics.json").read_text())
        assert payload["diagnostics"] == {}
        assert not (tmp_path / "complexity.csv").exists()
        assert not (tmp_path / "approximation.csv").exists()

    def test_complexity_section(self, tmp_path):
        cfg = {
            "seed": 2,
            "output": {"dir": str(tmp_path)},
            "diagnostics": {
                "complexity": {"width": 4, "d": 2, "n_list": [100, 200, 400],
                               "n_eps": 50, "n_class": 10}
            },
        }
        assert main(["diagnose", "--config", write_config(tmp_path, cfg)]) == 0
        payload = json.loads((tmp_path / "diagnostics.json").read_text())
        comp = payload["diagnostics"]["complexity"]
        assert comp["n_values"] == [100, 200, 400]
        assert comp["log_log_slope"] < 0
        rows = (tmp_path / "complexity.csv").read_text().strip().splitlines()
        assert rows[0] == "n,estimate"
        assert len(rows) == 4


def cfg_out(cfg):
    from pathlib import Path

    return Path(cfg["output"]["dir"])

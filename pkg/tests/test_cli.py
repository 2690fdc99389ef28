import json
import os
import subprocess
import sys

import numpy as np
import pytest

from hoso_adapter.cli import main
from hoso_adapter.featurebank import load_bank


@pytest.fixture
def bank_dir(tmp_path):
    dest = str(tmp_path / "bank")
    assert main(["synth", dest, "--classes", "3", "--dim", "8", "--noise", "0.3",
                 "--train-per-class", "8", "--test-per-class", "4",
                 "--seed", "11", "--views"]) == 0
    return dest


class TestSynthAndValidate:
    def test_synth_writes_loadable_bank(self, bank_dir):
        bank = load_bank(bank_dir)
        assert bank.num_classes == 3 and bank.embedding_dim == 8
        assert bank.has_augmented

    def test_synth_deterministic(self, tmp_path, bank_dir):
        other = str(tmp_path / "bank2")
        main(["synth", other, "--classes", "3", "--dim", "8", "--noise", "0.3",
              "--train-per-class", "8", "--test-per-class", "4",
              "--seed", "11", "--views"])
        for name in os.listdir(bank_dir):
            if name.endswith((".f32", ".u32")):
                a = open(os.path.join(bank_dir, name), "rb").read()
                b = open(os.path.join(other, name), "rb").read()
                assert a == b, name

    def test_synth_from_spec_file(self, tmp_path):
        spec = {"num_classes": 3, "dim": 8, "train_per_class": 4, "test_per_class": 2}
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        dest = str(tmp_path / "bank")
        assert main(["synth", dest, "--spec", str(path)]) == 0
        assert load_bank(dest).num_classes == 3

    def test_validate_ok(self, bank_dir, capsys):
        assert main(["validate-bank", bank_dir]) == 0
        out = capsys.readouterr().out
        assert "OK" in out and "zero-shot test accuracy" in out

    def test_validate_bad_dir(self, tmp_path, capsys):
        assert main(["validate-bank", str(tmp_path)]) == 1
        assert "error:" in capsys.readouterr().err


class TestRun:
    def run_args(self, bank_dir, out, extra=()):
        return ["run", "--bank", bank_dir, "--out", out, "--method", "hoso",
                "--shots", "4", "--epochs", "3", "--seeds", "1,2", *extra]

    def test_layout_and_summary(self, bank_dir, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert main(self.run_args(bank_dir, out)) == 0
        dataset = load_bank(bank_dir).dataset
        for seed in (1, 2):
            run_dir = os.path.join(out, dataset, "hoso", "4shot", f"seed{seed}")
            assert os.path.exists(os.path.join(run_dir, "report.json"))
            assert os.path.exists(os.path.join(run_dir, "trace.csv"))
        summary = json.load(open(os.path.join(out, dataset, "hoso", "4shot",
                                              "summary.json")))
        assert summary["seeds"] == [1, 2]
        assert summary["mean_accuracy"] == pytest.approx(np.mean(summary["accuracies"]))
        assert "mean accuracy over 2 seeds" in capsys.readouterr().out

    def test_summary_rerun_byte_identical(self, bank_dir, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        main(self.run_args(bank_dir, a))
        main(self.run_args(bank_dir, b))
        dataset = load_bank(bank_dir).dataset
        rel = os.path.join(dataset, "hoso", "4shot", "summary.json")
        assert open(os.path.join(a, rel), "rb").read() == \
               open(os.path.join(b, rel), "rb").read()

    def test_config_file_with_flag_override(self, bank_dir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"method": "fixed", "epochs": 2, "shots": 2,
                                   "fixed_alpha": 0.4}))
        out = str(tmp_path / "out")
        assert main(["run", "--bank", bank_dir, "--out", out, "--config", str(cfg),
                     "--fixed-alpha", "0.6", "--seeds", "1"]) == 0
        dataset = load_bank(bank_dir).dataset
        report = json.load(open(os.path.join(out, dataset, "fixed", "2shot",
                                             "seed1", "report.json")))
        assert report["config"]["fixed_alpha"] == 0.6  # flag beats file

    def test_unknown_config_key_rejected(self, bank_dir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"learning_rate": 0.1}))
        assert main(["run", "--bank", bank_dir, "--out", str(tmp_path / "o"),
                     "--config", str(cfg), "--seeds", "1"]) == 1
        assert "unknown config keys" in capsys.readouterr().err

    def test_requires_exactly_one_source(self, bank_dir, tmp_path, capsys):
        assert main(["run", "--out", str(tmp_path / "o"), "--seeds", "1"]) == 1
        assert "exactly one" in capsys.readouterr().err

    def test_synthetic_source(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"num_classes": 3, "dim": 8,
                                    "train_per_class": 8, "test_per_class": 4}))
        out = str(tmp_path / "out")
        assert main(["run", "--synthetic", str(spec), "--out", out,
                     "--method", "zeroshot", "--seeds", "1"]) == 0

    def test_hoso_out_env(self, bank_dir, tmp_path, monkeypatch):
        env_out = str(tmp_path / "envout")
        monkeypatch.setenv("HOSO_OUT", env_out)
        assert main(["run", "--bank", bank_dir, "--method", "zeroshot",
                     "--seeds", "1"]) == 0
        assert os.path.isdir(env_out)

    def test_workers_match_serial(self, bank_dir, tmp_path):
        serial, par = str(tmp_path / "s"), str(tmp_path / "p")
        main(self.run_args(bank_dir, serial))
        main(self.run_args(bank_dir, par, extra=["--workers", "2"]))
        dataset = load_bank(bank_dir).dataset
        rel = os.path.join(dataset, "hoso", "4shot", "summary.json")
        assert json.load(open(os.path.join(serial, rel)))["accuracies"] == \
               json.load(open(os.path.join(par, rel)))["accuracies"]


class TestSweep:
    def test_alpha_sweep(self, bank_dir, tmp_path, capsys):
        out = str(tmp_path / "out")
        assert main(["sweep", "--axis", "alpha", "--values", "0.2,0.8",
                     "--bank", bank_dir, "--out", out, "--shots", "2",
                     "--epochs", "2", "--seeds", "1,2"]) == 0
        dataset = load_bank(bank_dir).dataset
        sweep_dir = os.path.join(out, dataset, "sweep_alpha")
        with open(os.path.join(sweep_dir, "sweep.csv")) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "alpha,seed,test_accuracy"
        assert len(lines) == 5  # 2 values x 2 seeds
        with open(os.path.join(sweep_dir, "sweep_summary.csv")) as fh:
            assert len(fh.read().strip().splitlines()) == 3
        assert "alpha=0.2" in capsys.readouterr().out

    def test_empty_values_rejected(self, bank_dir, tmp_path, capsys):
        assert main(["sweep", "--axis", "alpha", "--values", ",",
                     "--bank", bank_dir, "--out", str(tmp_path / "o"),
                     "--seeds", "1"]) == 1
        assert "empty" in capsys.readouterr().err


class TestPlot:
    def test_svg_from_csv(self, tmp_path):
        csv_path = tmp_path / "data.csv"
        csv_path.write_text("epoch,alpha\n0,0.5\n1,0.4\n2,0.35\n")
        dest = str(tmp_path / "fig.svg")
        assert main(["plot", str(csv_path), dest]) == 0
        body = open(dest).read()
        assert "<svg" in body


class TestEntryPoint:
    def test_installed_script(self, tmp_path):
        dest = str(tmp_path / "bank")
        proc = subprocess.run(
            [sys.executable, "-m", "hoso_adapter.cli", "synth", dest,
             "--classes", "3", "--dim", "8", "--train-per-class", "4",
             "--test-per-class", "2"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "wrote synthetic bank" in proc.stdout

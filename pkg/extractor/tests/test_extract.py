import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from hoso_extractor import ExtractError, ExtractSpec, extract
from hoso_extractor.cli import main


def run_spec(image_dataset, out, **kw):
    base = dict(dataset="tiny", split_dir=image_dataset, backbone="RN50",
                batch_size=4, out=out, seed=0)
    base.update(kw)
    spec = ExtractSpec(**base)
    extract(spec)
    return spec


def read_manifest(path):
    with open(os.path.join(path, "manifest.json")) as fh:
        return json.load(fh)


class TestSpecValidation:
    def test_unknown_backbone(self):
        with pytest.raises(ExtractError, match="backbone"):
            ExtractSpec(dataset="d", split_dir=".", backbone="RN101").validate()

    def test_template_placeholder(self):
        with pytest.raises(ExtractError, match="placeholder"):
            ExtractSpec(dataset="d", split_dir=".", template="no slot").validate()
        with pytest.raises(ExtractError, match="placeholder"):
            ExtractSpec(dataset="d", split_dir=".", template="{} and {}").validate()


class TestExtraction:
    def test_rn50_bank_shape(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out)
        manifest = read_manifest(out)
        assert manifest["embedding_dim"] == 1024
        assert manifest["num_classes"] == 2
        assert manifest["class_names"] == ["cat", "dog"]
        assert manifest["counts"] == {"train": 8, "test": 4}
        assert manifest["backbone"] == "RN50"
        assert os.path.getsize(os.path.join(out, "train.f32")) == 8 * 1024 * 4
        protos = np.fromfile(os.path.join(out, "prototypes.f32"),
                             dtype="<f4").reshape(2, 1024)
        np.testing.assert_allclose(np.linalg.norm(protos, axis=1), 1.0, atol=1e-5)

    def test_vit_bank_dim(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out, backbone="ViT-B/16")
        assert read_manifest(out)["embedding_dim"] == 512
        assert os.path.getsize(os.path.join(out, "train.f32")) == 8 * 512 * 4

    def test_reextraction_byte_identical(self, image_dataset, tmp_path):
        a, b = str(tmp_path / "a"), str(tmp_path / "b")
        run_spec(image_dataset, a, emit_augmented=True)
        run_spec(image_dataset, b, emit_augmented=True)
        for name in sorted(os.listdir(a)):
            with open(os.path.join(a, name), "rb") as fa, \
                    open(os.path.join(b, name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_augmented_payloads(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out, emit_augmented=True)
        manifest = read_manifest(out)
        assert manifest["has_augmented"] is True
        n, dim = manifest["counts"]["train"], manifest["embedding_dim"]
        for name in ("train.weak.f32", "train.strong.f32"):
            payload = np.fromfile(os.path.join(out, name), dtype="<f4")
            assert payload.shape == (n * dim,)
            assert np.all(np.isfinite(payload))
        weak = np.fromfile(os.path.join(out, "train.weak.f32"), dtype="<f4")
        base = np.fromfile(os.path.join(out, "train.f32"), dtype="<f4")
        assert not np.array_equal(weak, base)

    def test_no_augmented_by_default(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out)
        assert read_manifest(out)["has_augmented"] is False
        assert not os.path.exists(os.path.join(out, "train.weak.f32"))

    def test_missing_train_split(self, tmp_path):
        with pytest.raises(ExtractError, match="train"):
            extract(ExtractSpec(dataset="d", split_dir=str(tmp_path),
                                out=str(tmp_path / "bank")))

    def test_corrupt_image_over_budget_fails(self, image_dataset, tmp_path):
        broken = str(tmp_path / "broken")
        shutil.copytree(image_dataset, broken)
        victim = os.path.join(broken, "train", "cat", "img_000.png")
        with open(victim, "wb") as fh:
            fh.write(b"not an image")
        # 1 of 12 images undecodable: far above the 1% budget
        with pytest.raises(ExtractError, match="budget"):
            run_spec(broken, str(tmp_path / "bank"))


class TestPrimaryInterop:
    """The extractor's output is consumed through the engine's CLI only."""

    def _validate(self, bank_dir):
        return subprocess.run(
            [sys.executable, "-m", "hoso_adapter.cli", "validate-bank", bank_dir],
            capture_output=True, text=True)

    def test_bank_passes_validate_bank(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out, emit_augmented=True)
        proc = self._validate(out)
        assert proc.returncode == 0, proc.stderr
        assert "OK" in proc.stdout and "dim=1024" in proc.stdout

    def test_engine_trains_on_extracted_bank(self, image_dataset, tmp_path):
        out = str(tmp_path / "bank")
        run_spec(image_dataset, out)
        proc = subprocess.run(
            [sys.executable, "-m", "hoso_adapter.cli", "run", "--bank", out,
             "--out", str(tmp_path / "runs"), "--method", "fixed",
             "--shots", "2", "--epochs", "2", "--seeds", "1"],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "mean accuracy" in proc.stdout


class TestCli:
    def test_extract_subcommand(self, image_dataset, tmp_path, capsys):
        out = str(tmp_path / "bank")
        code = main(["extract", "--dataset", "tiny", "--split-dir", image_dataset,
                     "--backbone", "RN50", "--out", out, "--batch-size", "4"])
        assert code == 0
        assert "wrote" in capsys.readouterr().out
        assert os.path.exists(os.path.join(out, "manifest.json"))

    def test_error_exit_code(self, tmp_path, capsys):
        code = main(["extract", "--dataset", "nope", "--out", str(tmp_path / "b"),
                     "--data-root", str(tmp_path)])
        assert code == 1
        assert "error:" in capsys.readouterr().err

"""Writer for the bank directory format consumed by the hoso engine.

This mirrors the documented external format (manifest.json plus
little-endian float32/uint32 payloads); every file is written to a temp name
in the target directory and renamed into place.
"""

from __future__ import annotations

import json
import os

import numpy as np

FORMAT_VERSION = 1


def _atomic_bytes(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def write_bank_dir(
    path: str,
    *,
    class_names: list[str],
    prototypes: np.ndarray,
    logit_scale: float,
    train_features: np.ndarray,
    train_labels: np.ndarray,
    test_features: np.ndarray,
    test_labels: np.ndarray,
    weak_features: np.ndarray | None = None,
    strong_features: np.ndarray | None = None,
    backbone: str = "",
    dataset: str = "",
    template: str = "{}",
    normalized: bool = False,
) -> None:
    os.makedirs(path, exist_ok=True)
    dim = prototypes.shape[1]
    has_augmented = weak_features is not None

    payloads = {
        "prototypes.f32": np.ascontiguousarray(prototypes, dtype="<f4"),
        "train.f32": np.ascontiguousarray(train_features, dtype="<f4"),
        "test.f32": np.ascontiguousarray(test_features, dtype="<f4"),
        "train.labels.u32": np.ascontiguousarray(train_labels, dtype="<u4"),
        "test.labels.u32": np.ascontiguousarray(test_labels, dtype="<u4"),
    }
    if has_augmented:
        payloads["train.weak.f32"] = np.ascontiguousarray(weak_features, dtype="<f4")
        payloads["train.strong.f32"] = np.ascontiguousarray(strong_features, dtype="<f4")
    for name, arr in payloads.items():
        _atomic_bytes(os.path.join(path, name), arr.tobytes())

    manifest = {
        "format_version": FORMAT_VERSION,
        "embedding_dim": int(dim),
        "num_classes": len(class_names),
        "class_names": class_names,
        "logit_scale": float(logit_scale),
        "normalized": normalized,
        "counts": {"train": int(len(train_labels)), "test": int(len(test_labels))},
        "has_augmented": has_augmented,
        "backbone": backbone,
        "dataset": dataset,
        "template": template,
    }
    _atomic_bytes(os.path.join(path, "manifest.json"),
                  json.dumps(manifest, indent=2).encode("utf-8"))

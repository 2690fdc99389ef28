"""On-disk feature-bank format, in-memory dataset model, and few-shot splits.

A bank directory contains:

* ``manifest.json`` - UTF-8 JSON with keys ``format_version`` (always 1),
  ``embedding_dim``, ``num_classes``, ``class_names``, ``logit_scale``,
  ``normalized``, ``counts`` ({"train": N, "test": M}), ``has_augmented``,
  ``backbone``, ``dataset``, ``template``.
* ``prototypes.f32`` - C*dim little-endian float32, row-major.
* ``train.f32`` / ``test.f32`` - N*dim little-endian float32, row-major.
* ``train.labels.u32`` / ``test.labels.u32`` - little-endian uint32.
* optional ``train.weak.f32`` / ``train.strong.f32`` - same shape as train.f32.

Features are stored unnormalized (the manifest's ``normalized`` flag records
whether the extractor already unit-normalized them); the engine normalizes on
use.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, FormatError, InsufficientShotsError
from .rng import class_rng

FORMAT_VERSION = 1
PROTO_NORM_TOL = 1e-5
ACCEPTED_SHOT_COUNTS = (1, 2, 4, 8, 16)

MANIFEST_KEYS = (
    "format_version",
    "embedding_dim",
    "num_classes",
    "class_names",
    "logit_scale",
    "normalized",
    "counts",
    "has_augmented",
    "backbone",
    "dataset",
    "template",
)


@dataclass
class FeatureBank:
    """Immutable store of precomputed embeddings for one dataset/backbone pair.

    ``train_features`` is (N, dim) float32, ``train_labels`` (N,) int64; same
    for the test split. ``weak_features``/``strong_features`` are either both
    present with train shape or both None.
    """

    embedding_dim: int
    num_classes: int
    class_names: list[str]
    text_prototypes: np.ndarray
    logit_scale: float
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    weak_features: np.ndarray | None = None
    strong_features: np.ndarray | None = None
    normalized: bool = False
    backbone: str = "synthetic"
    dataset: str = "synthetic"
    template: str = "a photo of a {}."

    @property
    def has_augmented(self) -> bool:
        return self.weak_features is not None

    def validate(self, auto_normalize: bool = False) -> None:
        """Check every invariant; raises DataError/FormatError on violation."""
        if self.embedding_dim <= 0 or self.num_classes <= 0:
            raise FormatError("embedding_dim and num_classes must be positive")
        if len(self.class_names) != self.num_classes:
            raise FormatError(
                f"{len(self.class_names)} class names for {self.num_classes} classes"
            )
        if self.logit_scale <= 0:
            raise DataError(f"logit_scale must be positive, got {self.logit_scale}")
        if self.text_prototypes.shape != (self.num_classes, self.embedding_dim):
            raise FormatError(
                f"prototypes shape {self.text_prototypes.shape} != "
                f"({self.num_classes}, {self.embedding_dim})"
            )
        for name, arr in self._payload_arrays():
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite values in {name}")
        norms = np.linalg.norm(self.text_prototypes.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > PROTO_NORM_TOL):
            if auto_normalize:
                self.text_prototypes = (
                    self.text_prototypes / norms[:, None]
                ).astype(np.float32)
            else:
                worst = int(np.argmax(np.abs(norms - 1.0)))
                raise DataError(
                    f"text prototype {worst} has L2 norm {norms[worst]:.6f}, expected 1"
                )
        for split, feats, labels in (
            ("train", self.train_features, self.train_labels),
            ("test", self.test_features, self.test_labels),
        ):
            if feats.shape != (len(labels), self.embedding_dim):
                raise FormatError(f"{split} features shape {feats.shape} inconsistent")
            if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise DataError(f"{split} labels outside [0, {self.num_classes})")
        if (self.weak_features is None) != (self.strong_features is None):
            raise FormatError("weak/strong augmented views must both be present")
        if self.weak_features is not None:
            n = len(self.train_labels)
            if self.weak_features.shape != (n, self.embedding_dim) or \
                    self.strong_features.shape != (n, self.embedding_dim):
                raise FormatError("augmented views must pair 1:1 with train items")

    def _payload_arrays(self):
        yield "prototypes", self.text_prototypes
        yield "train features", self.train_features
        yield "test features", self.test_features
        if self.weak_features is not None:
            yield "weak views", self.weak_features
            yield "strong views", self.strong_features

    def class_indices(self, label: int, split: str = "train") -> np.ndarray:
        labels = self.train_labels if split == "train" else self.test_labels
        return np.flatnonzero(labels == label)


@dataclass
class SupportSet:
    """K-shot training split; ``indices`` point back into bank.train_features."""

    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    shots_per_class: int

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class HoldoutCache:
    """Hold-out cache with exactly cache_per_class items per class."""

    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    cache_per_class: int

    def __len__(self) -> int:
        return len(self.indices)


def _read_f32(path: str, rows: int, cols: int) -> np.ndarray:
    expected = rows * cols * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {rows}x{cols} float32, found {actual}"
        )
    data = np.fromfile(path, dtype="<f4")
    return data.reshape(rows, cols)


def _read_u32(path: str, count: int) -> np.ndarray:
    expected = count * 4
    actual = os.path.getsize(path)
    if actual != expected:
        raise FormatError(
            f"{path}: expected {expected} bytes for {count} uint32, found {actual}"
        )
    return np.fromfile(path, dtype="<u4").astype(np.int64)


def load_bank(path: str, auto_normalize: bool = False) -> FeatureBank:
    """Load and fully validate a feature-bank directory."""
    manifest_path = os.path.join(path, "manifest.json")
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise FormatError(f"missing manifest: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed manifest {manifest_path}: {exc}") from exc

    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise FormatError(f"manifest missing keys: {missing}")
    if manifest["format_version"] != FORMAT_VERSION:
        raise FormatError(
            f"unsupported format_version {manifest['format_version']!r}, expected {FORMAT_VERSION}"
        )

    dim = int(manifest["embedding_dim"])
    num_classes = int(manifest["num_classes"])
    counts = manifest["counts"]
    n_train, n_test = int(counts["train"]), int(counts["test"])

    bank = FeatureBank(
        embedding_dim=dim,
        num_classes=num_classes,
        class_names=list(manifest["class_names"]),
        text_prototypes=_read_f32(os.path.join(path, "prototypes.f32"), num_classes, dim),
        logit_scale=float(manifest["logit_scale"]),
        train_features=_read_f32(os.path.join(path, "train.f32"), n_train, dim),
        train_labels=_read_u32(os.path.join(path, "train.labels.u32"), n_train),
        test_features=_read_f32(os.path.join(path, "test.f32"), n_test, dim),
        test_labels=_read_u32(os.path.join(path, "test.labels.u32"), n_test),
        normalized=bool(manifest["normalized"]),
        backbone=manifest["backbone"],
        dataset=manifest["dataset"],
        template=manifest["template"],
    )
    if manifest["has_augmented"]:
        bank.weak_features = _read_f32(os.path.join(path, "train.weak.f32"), n_train, dim)
        bank.strong_features = _read_f32(os.path.join(path, "train.strong.f32"), n_train, dim)
    bank.validate(auto_normalize=auto_normalize)
    return bank


def write_bank(bank: FeatureBank, path: str) -> None:
    """Write a validated bank; load_bank(write_bank(b)) is bit-exact on float32."""
    bank.validate()
    try:
        os.makedirs(path, exist_ok=True)
        manifest = {
            "format_version": FORMAT_VERSION,
            "embedding_dim": bank.embedding_dim,
            "num_classes": bank.num_classes,
            "class_names": bank.class_names,
            "logit_scale": bank.logit_scale,
            "normalized": bank.normalized,
            "counts": {"train": len(bank.train_labels), "test": len(bank.test_labels)},
            "has_augmented": bank.has_augmented,
            "backbone": bank.backbone,
            "dataset": bank.dataset,
            "template": bank.template,
        }
        with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
        _dump_f32(bank.text_prototypes, os.path.join(path, "prototypes.f32"))
        _dump_f32(bank.train_features, os.path.join(path, "train.f32"))
        _dump_f32(bank.test_features, os.path.join(path, "test.f32"))
        _dump_u32(bank.train_labels, os.path.join(path, "train.labels.u32"))
        _dump_u32(bank.test_labels, os.path.join(path, "test.labels.u32"))
        if bank.has_augmented:
            _dump_f32(bank.weak_features, os.path.join(path, "train.weak.f32"))
            _dump_f32(bank.strong_features, os.path.join(path, "train.strong.f32"))
    except OSError as exc:
        raise FormatError(f"cannot write bank at {path}: {exc}") from exc


def _dump_f32(arr: np.ndarray, path: str) -> None:
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)


def _dump_u32(arr: np.ndarray, path: str) -> None:
    np.ascontiguousarray(arr, dtype="<u4").tofile(path)


def sample_few_shot(bank: FeatureBank, k: int, seed: int) -> SupportSet:
    """Sample exactly k train items per class, deterministically in (bank, k, seed).

    Per-class draws use independent streams keyed by the class index, so the
    selection for one class never depends on any other class.
    """
    if k < 1:
        raise ConfigError(f"shots per class must be >= 1, got {k}")
    if k not in ACCEPTED_SHOT_COUNTS:
        warnings.warn(f"unusual shot count k={k}; standard values are {ACCEPTED_SHOT_COUNTS}")
    picked = []
    for c in range(bank.num_classes):
        pool = bank.class_indices(c)
        if len(pool) < k:
            raise InsufficientShotsError(
                f"class {c} ({bank.class_names[c]!r}) has {len(pool)} train items, need {k}"
            )
        order = class_rng(seed, c).permutation(len(pool))
        picked.append(pool[order[:k]])
    indices = np.concatenate(picked)
    return SupportSet(
        indices=indices,
        features=bank.train_features[indices],
        labels=bank.train_labels[indices],
        shots_per_class=k,
    )


def split_hoso_cache(
    support: SupportSet,
    cache_per_class: int,
    remove_from_support: bool,
    seed: int,
) -> tuple[SupportSet, HoldoutCache]:
    """Split a hold-out cache off the support set.

    The cache takes the first ``cache_per_class`` items of each class's
    seeded shuffle. With ``remove_from_support`` the reduced set drops them
    (disjoint index sets); without it (the keep-cache ablation) the reduced
    set is the full support.
    """
    if cache_per_class < 1:
        raise ConfigError(f"cache_per_class must be >= 1, got {cache_per_class}")
    if remove_from_support and cache_per_class >= support.shots_per_class:
        raise ConfigError(
            f"cannot remove a cache of {cache_per_class} per class from a "
            f"{support.shots_per_class}-shot support set"
        )
    cache_rows, keep_rows = [], []
    classes = np.unique(support.labels)
    for c in classes:
        rows = np.flatnonzero(support.labels == c)
        order = class_rng(seed ^ 0xCAC4E, int(c)).permutation(len(rows))
        cache_rows.append(rows[order[:cache_per_class]])
        keep_rows.append(rows[order[cache_per_class:]])
    cache_rows = np.concatenate(cache_rows)
    cache = HoldoutCache(
        indices=support.indices[cache_rows],
        features=support.features[cache_rows],
        labels=support.labels[cache_rows],
        cache_per_class=cache_per_class,
    )
    if remove_from_support:
        keep_rows = np.concatenate(keep_rows)
        reduced = SupportSet(
            indices=support.indices[keep_rows],
            features=support.features[keep_rows],
            labels=support.labels[keep_rows],
            shots_per_class=support.shots_per_class - cache_per_class,
        )
    else:
        reduced = support
    return reduced, cache

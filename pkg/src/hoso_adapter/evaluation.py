"""Evaluation, analysis sweeps, and the synthetic fixture generator."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ShapeError
from .featurebank import FeatureBank
from .model import zero_shot_classifier
from .rng import derived_rng
from .trainers import RunReport, TrainConfig, train_fixed_alpha


@dataclass
class EvalResult:
    """Top-1 accuracy, per-class breakdown, and confusion counts."""

    accuracy: float
    per_class: np.ndarray
    confusion: np.ndarray  # (true, predicted) counts

    def __post_init__(self):
        total = self.confusion.sum()
        assert total == 0 or abs(self.accuracy - np.trace(self.confusion) / total) < 1e-12


@dataclass
class SyntheticSpec:
    """Recipe for a unit-sphere Gaussian-cluster classification fixture.

    ``prototype_angle_spread`` in (0, 1] moves class directions from a single
    shared direction (0) to mutually orthogonal (1); ``within_class_noise``
    is the stddev of the isotropic perturbation on image features;
    ``domain_gap`` perturbs the text prototypes away from the class
    directions, emulating a weak zero-shot prior.
    """

    num_classes: int = 10
    dim: int = 32
    prototype_angle_spread: float = 1.0
    within_class_noise: float = 0.3
    domain_gap: float = 0.0
    train_per_class: int = 64
    test_per_class: int = 64
    logit_scale: float = 10.0
    seed: int = 0


def evaluate(bank: FeatureBank, classifier) -> EvalResult:
    """Score a logit closure over the bank's test split."""
    if len(bank.test_labels) == 0:
        raise ConfigError("bank has no test items")
    logits = classifier(bank.test_features)
    preds = np.argmax(logits, axis=1)
    c = bank.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (bank.test_labels, preds), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(counts > 0, np.diag(confusion) / np.maximum(counts, 1), np.nan)
    return EvalResult(accuracy=accuracy, per_class=per_class, confusion=confusion)


def pearson_r(xs, ys) -> float | None:
    """Sample Pearson correlation with float64 accumulation; None if degenerate."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ShapeError("need two equally sized samples of length >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return None
    return float((xc * yc).sum() / denom)


def one_shot_correlation(bank: FeatureBank, runs: int, seed: int, pool: str = "train"):
    """Zero-shot accuracy on repeated one-item-per-class samples vs full test.

    Returns (pairs, r) where pairs is a list of (one_shot_acc, full_test_acc)
    and r is the Pearson correlation or None when the one-shot accuracies are
    all identical (degenerate variance). The single shot is drawn from the
    train pool by default; ``pool='test'`` samples from the test split.
    """
    if runs < 2:
        raise ConfigError("need at least 2 runs")
    zs = zero_shot_classifier(bank)
    full_acc = evaluate(bank, zs).accuracy
    features = bank.train_features if pool == "train" else bank.test_features
    labels = bank.train_labels if pool == "train" else bank.test_labels
    pairs = []
    for run in range(runs):
        rng = derived_rng(seed, run, 0x15C0)
        rows = []
        for c in range(bank.num_classes):
            idx = np.flatnonzero(labels == c)
            if len(idx) == 0:
                raise ConfigError(f"class {c} has no items in the {pool} pool")
            rows.append(int(rng.choice(idx)))
        one_acc = float(np.mean(np.argmax(zs(features[rows]), axis=1) == labels[rows]))
        pairs.append((one_acc, full_acc))
    r = pearson_r([p[0] for p in pairs], [p[1] for p in pairs])
    return pairs, r


def grid_search_alpha(bank: FeatureBank, config: TrainConfig, candidates):
    """ORACLE sweep: one fixed-ratio run per candidate, scored on the test set.

    Test-set selection violates the validation-free protocol; the result is
    labeled accordingly and intended for analysis only. Returns (rows, best)
    with rows = [(alpha, accuracy)] in candidate order; argmax ties go to the
    lowest alpha.
    """
    candidates = list(candidates)
    if not candidates:
        raise ConfigError("empty candidate list")
    if any(not 0.0 <= a <= 1.0 for a in candidates):
        raise ConfigError("alpha candidates must lie in [0, 1]")
    rows = []
    for alpha in candidates:
        _, report = train_fixed_alpha(bank, replace(config, method="fixed"), alpha=float(alpha))
        rows.append((float(alpha), report.final_test_accuracy))
    best = max(rows, key=lambda t: (t[1], -t[0]))
    return rows, best


def per_class_alpha_sweep(bank: FeatureBank, config: TrainConfig, alphas):
    """Per-class accuracy for one trained run per ratio; returns (C, len(alphas))."""
    alphas = list(alphas)
    if not alphas:
        raise ConfigError("empty alpha list")
    matrix = np.zeros((bank.num_classes, len(alphas)))
    totals = []
    for j, alpha in enumerate(alphas):
        _, report = train_fixed_alpha(bank, replace(config, method="fixed"), alpha=float(alpha))
        matrix[:, j] = report.per_class_accuracy
        totals.append(report.final_test_accuracy)
    return matrix, totals


def overfit_gap(train_trace, test_trace):
    """gap[e] = train_acc[e] - test_acc[e]."""
    tr = np.asarray(train_trace, dtype=np.float64)
    te = np.asarray(test_trace, dtype=np.float64)
    if tr.shape != te.shape:
        raise ShapeError(f"trace lengths differ: {tr.shape} vs {te.shape}")
    return tr - te


def gap_from_report(report: RunReport):
    if report.test_acc_trace is None:
        raise ConfigError("report has no per-epoch test trace; enable eval_epoch_test")
    return overfit_gap(report.train_acc_trace, report.test_acc_trace)


def make_synthetic_bank(spec: SyntheticSpec) -> FeatureBank:
    """Deterministic unit-sphere class-cluster fixture bank."""
    if spec.dim < spec.num_classes:
        raise ConfigError(
            f"dim {spec.dim} < num_classes {spec.num_classes}: cannot spread prototypes")
    rng = derived_rng(spec.seed, 0x5F1C)
    # orthonormal class directions via QR, then pulled toward a shared axis
    basis, _ = np.linalg.qr(rng.normal(size=(spec.dim, spec.num_classes)))
    shared = basis[:, 0]
    s = spec.prototype_angle_spread
    dirs = s * basis.T + (1.0 - s) * shared
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    def cluster(per_class: int, noise: float, stream: int):
        feats, labels = [], []
        for c in range(spec.num_classes):
            g = derived_rng(spec.seed, stream, c)
            x = dirs[c] + noise * g.normal(size=(per_class, spec.dim))
            feats.append(x)
            labels.extend([c] * per_class)
        return np.concatenate(feats).astype(np.float32), np.asarray(labels, dtype=np.int64)

    train_x, train_y = cluster(spec.train_per_class, spec.within_class_noise, 0x41)
    test_x, test_y = cluster(spec.test_per_class, spec.within_class_noise, 0x42)

    proto = dirs + spec.domain_gap * derived_rng(spec.seed, 0x6A9).normal(
        size=(spec.num_classes, spec.dim))
    proto /= np.linalg.norm(proto, axis=1, keepdims=True)

    bank = FeatureBank(
        embedding_dim=spec.dim,
        num_classes=spec.num_classes,
        class_names=[f"class_{c}" for c in range(spec.num_classes)],
        text_prototypes=proto.astype(np.float32),
        logit_scale=spec.logit_scale,
        train_features=train_x,
        train_labels=train_y,
        test_features=test_x,
        test_labels=test_y,
        backbone="synthetic",
        dataset=f"synthetic-c{spec.num_classes}-d{spec.dim}-s{spec.seed}",
        template="{}",
    )
    bank.validate(auto_normalize=True)
    return bank


def add_synthetic_views(bank: FeatureBank, weak_noise: float = 0.05,
                        strong_noise: float = 0.3, seed: int = 0) -> FeatureBank:
    """Attach synthetic weak/strong view features to a fixture bank."""
    rng = derived_rng(seed, 0xA06)
    base = bank.train_features.astype(np.float64)
    bank.weak_features = (base + weak_noise * rng.normal(size=base.shape)).astype(np.float32)
    bank.strong_features = (base + strong_noise * rng.normal(size=base.shape)).astype(np.float32)
    bank.validate()
    return bank


def write_csv(path: str, header, rows) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)

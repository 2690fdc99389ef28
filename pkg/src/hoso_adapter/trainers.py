"""Training procedures for every method and ablation the engine supports.

``hoso`` is the headline method: the adapter trains on the reduced support
set while the ratio logit trains on a small per-class hold-out cache with its
own optimizer, one ratio update per epoch after all adapter minibatches.
The rest are baselines: fixed ratio, naive joint training, confidence-derived
ratio, online dual-view-consistency ratio, random ratio, and the
training-free key-value cache classifier.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, field, asdict, replace
from typing import Callable

import numpy as np

from . import numerics as nm
from .errors import ConfigError, DataError
from .featurebank import FeatureBank, HoldoutCache, SupportSet, sample_few_shot, split_hoso_cache
from .model import AdapterModel, BlendMode, alpha_from_logit, zero_shot_classifier
from .optim import SgdState, cosine_lr
from .rng import derived_rng

METHODS = ("zeroshot", "fixed", "hoso", "joint", "svl", "dvc", "random", "tip")


@dataclass
class TrainConfig:
    """Every knob of a training run; defaults follow the reference recipe."""

    method: str = "hoso"
    shots: int = 16
    seed: int = 1
    epochs: int = 200
    batch_size: int = 32
    adapter_lr: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 5e-4
    ratio_lr: float = 0.1
    alpha_init: float = 0.5
    cache_per_class: int = 1
    remove_cache: bool = True
    blend_mode: str = "feature"
    # fixed / svl / random
    fixed_alpha: float = 0.2
    # dvc
    dvc_w_dvc: float = 0.5
    dvc_w_acc: float = 0.5
    dvc_alpha_min: float = 0.1
    dvc_alpha_max: float = 0.9
    dvc_smooth: float = 0.1
    # tip
    tip_alpha: float = 1.0
    tip_beta: float = 1.0
    use_augmented_views: bool = False
    # per-epoch test evaluation (for overfit-gap traces)
    eval_epoch_test: bool = False
    eval_epoch_test_subsample: int = 512

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        for name in ("epochs", "batch_size", "shots", "cache_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.1 < self.alpha_init < 0.9:
            raise ConfigError("alpha_init must lie in the open interval (0.1, 0.9)")
        if not 0.0 <= self.fixed_alpha <= 1.0:
            raise ConfigError("fixed_alpha must lie in [0, 1]")
        try:
            BlendMode(self.blend_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class RunReport:
    """Per-epoch traces and final metrics of one training run."""

    method: str
    seed: int
    config: dict
    alpha_trace: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)
    train_acc_trace: list[float] = field(default_factory=list)
    cache_loss_trace: list[float] = field(default_factory=list)
    test_acc_trace: list[float] | None = None
    final_test_accuracy: float | None = None
    per_class_accuracy: list[float] | None = None
    wall_clock_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def gap_trace(self) -> list[float] | None:
        if self.test_acc_trace is None:
            return None
        return [tr - te for tr, te in zip(self.train_acc_trace, self.test_acc_trace)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_test_gap_trace"] = self.gap_trace
        return d

    def save(self, out_dir: str) -> None:
        """Write report.json and trace.csv into out_dir."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "trace.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            header = ["epoch", "alpha", "lr", "train_acc", "cache_loss"]
            if self.test_acc_trace is not None:
                header.append("test_acc")
            writer.writerow(header)
            for e in range(len(self.alpha_trace)):
                row = [e, self.alpha_trace[e], self.lr_trace[e],
                       self.train_acc_trace[e], self.cache_loss_trace[e]]
                if self.test_acc_trace is not None:
                    row.append(self.test_acc_trace[e])
                writer.writerow(row)


@dataclass
class TrainerHooks:
    """Optional instrumentation points, used by the isolation tests."""

    on_batch: Callable[[int, np.ndarray], None] | None = None
    on_adapter_phase_end: Callable[[int, object], None] | None = None
    on_ratio_step_end: Callable[[int, object], None] | None = None


def psi_checksum(params) -> str:
    """Digest of the adapter weights (excludes the ratio logit)."""
    h = hashlib.sha256()
    for t in params.tensors().values():
        h.update(np.ascontiguousarray(t, dtype=np.float64).tobytes())
    return h.hexdigest()


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def _epoch_batches(n: int, batch_size: int, rng) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _test_eval_set(bank: FeatureBank, config: TrainConfig):
    """Fixed, seeded test subsample for per-epoch traces."""
    n = len(bank.test_labels)
    if n == 0:
        return None
    cap = config.eval_epoch_test_subsample
    if cap and n > cap:
        idx = derived_rng(config.seed, 0x7E57).choice(n, size=cap, replace=False)
        idx.sort()
        return bank.test_features[idx], bank.test_labels[idx]
    return bank.test_features, bank.test_labels


def _finalize(report: RunReport, model: AdapterModel, bank: FeatureBank,
              alpha_override: float | None, t0: float) -> None:
    if len(bank.test_labels):
        logits = model.classifier(alpha_override)(bank.test_features)
        preds = np.argmax(logits, axis=1)
        report.final_test_accuracy = float(np.mean(preds == bank.test_labels))
        per_class = []
        for c in range(bank.num_classes):
            mask = bank.test_labels == c
            per_class.append(float(np.mean(preds[mask] == c)) if mask.any() else float("nan"))
        report.per_class_accuracy = per_class
    report.wall_clock_seconds = time.perf_counter() - t0


def _train_adapter_loop(
    bank: FeatureBank,
    config: TrainConfig,
    support: SupportSet,
    cache: HoldoutCache | None,
    alpha_mode: str,  # 'hoso' | 'joint' | 'fixed' | 'dvc'
    fixed_alpha: float | None = None,
    hooks: TrainerHooks | None = None,
):
    """Shared epoch loop. Returns (model, report).

    alpha handling per mode: ``hoso`` steps the ratio logit once per epoch on
    the cache with its own optimizer; ``joint`` appends the logit to the
    adapter optimizer group; ``fixed`` keeps a constant override; ``dvc``
    maintains a direct alpha value updated per step by the EMA rule.
    """
    t0 = time.perf_counter()
    hooks = hooks or TrainerHooks()
    model = AdapterModel.for_bank(bank, config.seed, config.alpha_init,
                                  BlendMode(config.blend_mode))
    params = model.params
    adapter_opt = SgdState(lr=config.adapter_lr, momentum=config.momentum,
                           weight_decay=config.weight_decay)
    ratio_opt = SgdState(lr=config.ratio_lr)  # plain SGD, no momentum/decay

    if config.use_augmented_views and not bank.has_augmented:
        raise DataError("use_augmented_views requires a bank with augmented views")
    if alpha_mode == "dvc":
        if not bank.has_augmented:
            raise DataError("dvc training requires weak/strong augmented views")
        dvc_alpha = config.alpha_init

    report = RunReport(method=config.method, seed=config.seed, config=asdict(config))
    test_set = _test_eval_set(bank, config) if config.eval_epoch_test else None
    if test_set is not None:
        report.test_acc_trace = []

    features = support.features
    labels = support.labels
    n = len(labels)

    for epoch in range(config.epochs):
        lr_now = cosine_lr(epoch, config.epochs, config.adapter_lr)
        shuffle_rng = derived_rng(config.seed, epoch, 0xB47C)
        cache_loss = float("nan")

        for batch in _epoch_batches(n, config.batch_size, shuffle_rng):
            if hooks.on_batch:
                hooks.on_batch(epoch, support.indices[batch])
            x = features[batch]
            y = labels[batch]
            if config.use_augmented_views:
                x, y = _with_views(bank, support, batch, x, y, config.seed, epoch)

            if alpha_mode == "fixed":
                override = fixed_alpha
            elif alpha_mode == "dvc":
                dvc_alpha = _dvc_update(model, bank, support, batch, x, y,
                                        dvc_alpha, config)
                override = dvc_alpha
            else:
                override = None

            logits, tape = model.forward(x, alpha_override=override)
            _, dlogits = nm.softmax_xent_batch(logits, y, model.kernels)
            grads = model.backward(tape, dlogits)
            for name, p in params.tensors().items():
                adapter_opt.step_tensor(name, p, grads[name], lr_now)
            if alpha_mode == "joint":
                params.alpha_logit = adapter_opt.step_scalar(
                    "alpha_logit", params.alpha_logit, grads["alpha_logit"], lr_now)

        if hooks.on_adapter_phase_end:
            hooks.on_adapter_phase_end(epoch, params)

        if alpha_mode == "hoso":
            logits, tape = model.forward(cache.features)
            cache_loss, dlogits = nm.softmax_xent_batch(logits, cache.labels, model.kernels)
            grads = model.backward(tape, dlogits)
            params.alpha_logit = ratio_opt.step_scalar(
                "alpha_logit", params.alpha_logit, grads["alpha_logit"])
            if hooks.on_ratio_step_end:
                hooks.on_ratio_step_end(epoch, params)

        if alpha_mode == "fixed":
            alpha_now = fixed_alpha
        elif alpha_mode == "dvc":
            alpha_now = dvc_alpha
        else:
            alpha_now = alpha_from_logit(params.alpha_logit)
        report.alpha_trace.append(float(alpha_now))
        report.lr_trace.append(lr_now)
        override = alpha_now if alpha_mode in ("fixed", "dvc") else None
        report.train_acc_trace.append(
            _accuracy(model.classifier(override)(features), labels))
        report.cache_loss_trace.append(cache_loss)
        if test_set is not None:
            report.test_acc_trace.append(
                _accuracy(model.classifier(override)(test_set[0]), test_set[1]))

    final_override = None
    if alpha_mode == "fixed":
        final_override = fixed_alpha
    elif alpha_mode == "dvc":
        final_override = dvc_alpha
    _finalize(report, model, bank, final_override, t0)
    report.extra["final_alpha"] = report.alpha_trace[-1]
    return model, report


def _with_views(bank, support, batch, x, y, seed, epoch):
    """Append one augmented view per item (weak or strong, coin per item)."""
    idx = support.indices[batch]
    coins = derived_rng(seed, epoch, 0xA06).random(len(idx)) < 0.5
    views = np.where(coins[:, None], bank.weak_features[idx], bank.strong_features[idx])
    return np.concatenate([x, views]), np.concatenate([y, y])


def _dvc_update(model, bank, support, batch, x, y, alpha, config: TrainConfig) -> float:
    """One online ratio update from dual-view consistency and batch accuracy."""
    idx = support.indices[batch]
    weak, _ = nm.l2_normalize(bank.weak_features[idx].astype(np.float64))
    strong, _ = nm.l2_normalize(bank.strong_features[idx].astype(np.float64))
    dvc = float(np.mean(np.einsum("ij,ij->i", weak, strong)))
    logits, _ = model.forward(x, alpha_override=alpha)
    acc = _accuracy(logits, y)
    target = config.dvc_w_dvc * dvc + config.dvc_w_acc * (1.0 - acc)
    target = min(max(target, config.dvc_alpha_min), config.dvc_alpha_max)
    return (1.0 - config.dvc_smooth) * alpha + config.dvc_smooth * target


def train_hoso(bank: FeatureBank, config: TrainConfig, hooks: TrainerHooks | None = None):
    """Decoupled training: adapter on the reduced support, ratio on the cache."""
    if config.remove_cache and config.shots <= config.cache_per_class:
        if config.shots == 1:
            raise ConfigError("cannot hold one shot out of one")
        raise ConfigError(
            f"cache of {config.cache_per_class} per class needs more than "
            f"{config.shots} shots when removal is enabled")
    support = sample_few_shot(bank, config.shots, config.seed)
    reduced, cache = split_hoso_cache(
        support, config.cache_per_class, config.remove_cache, config.seed)
    model, report = _train_adapter_loop(bank, config, reduced, cache, "hoso", hooks=hooks)
    return model.params, report


def train_fixed_alpha(bank: FeatureBank, config: TrainConfig,
                      hooks: TrainerHooks | None = None, alpha: float | None = None):
    """Constant-ratio training on the full support set (no cache split)."""
    alpha = config.fixed_alpha if alpha is None else alpha
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"fixed alpha {alpha} outside [0, 1]")
    support = sample_few_shot(bank, config.shots, config.seed)
    model, report = _train_adapter_loop(bank, config, support, None, "fixed",
                                        fixed_alpha=alpha, hooks=hooks)
    report.extra["fixed_alpha"] = alpha
    return model.params, report


def train_joint(bank: FeatureBank, config: TrainConfig, hooks: TrainerHooks | None = None):
    """Naive baseline: ratio logit joins the adapter optimizer on the same data."""
    support = sample_few_shot(bank, config.shots, config.seed)
    model, report = _train_adapter_loop(bank, config, support, None, "joint", hooks=hooks)
    return model.params, report


def alpha_svl(bank: FeatureBank, support: SupportSet) -> float:
    """1 - mean zero-shot max-class confidence over the support set."""
    if len(support) == 0:
        raise ConfigError("support set is empty")
    logits = zero_shot_classifier(bank)(support.features)
    probs = nm.softmax(logits)
    return float(1.0 - np.mean(probs.max(axis=1)))


def train_svl(bank: FeatureBank, config: TrainConfig, hooks: TrainerHooks | None = None):
    """Confidence-derived fixed ratio, then constant-ratio training."""
    support = sample_few_shot(bank, config.shots, config.seed)
    alpha = alpha_svl(bank, support)
    params, report = train_fixed_alpha(bank, config, hooks=hooks, alpha=alpha)
    report.extra["svl_alpha"] = alpha
    return params, report


def train_random_alpha(bank: FeatureBank, config: TrainConfig,
                       hooks: TrainerHooks | None = None):
    """Ratio drawn uniformly from [0, 1] once per run, then fixed training."""
    alpha = float(derived_rng(config.seed, 0xA1FA).random())
    params, report = train_fixed_alpha(bank, config, hooks=hooks, alpha=alpha)
    report.extra["random_alpha"] = alpha
    return params, report


def train_pathclip_dvc(bank: FeatureBank, config: TrainConfig,
                       hooks: TrainerHooks | None = None):
    """Online ratio from dual-view consistency + batch accuracy (EMA-smoothed)."""
    support = sample_few_shot(bank, config.shots, config.seed)
    model, report = _train_adapter_loop(bank, config, support, None, "dvc", hooks=hooks)
    return model.params, report


def tip_adapter(bank: FeatureBank, support: SupportSet,
                alpha: float = 1.0, beta: float = 1.0):
    """Training-free key-value cache classifier closure.

    logits(x) = zero-shot(x) + alpha * exp(-beta * (1 - x_hat @ F^T)) @ L
    with F the normalized support features and L their one-hot labels.
    """
    f_train, _ = nm.l2_normalize(support.features.astype(np.float64))
    onehot = np.zeros((len(support), bank.num_classes))
    onehot[np.arange(len(support)), support.labels] = 1.0
    zs = zero_shot_classifier(bank)

    def fn(features):
        x = nm.as_f64(features)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        xhat, _ = nm.l2_normalize(x)
        affinity = np.exp(-beta * (1.0 - xhat @ f_train.T))
        logits = zs(x) + alpha * affinity @ onehot
        return logits[0] if squeeze else logits

    return fn


def train_with_extra_views(bank: FeatureBank, config: TrainConfig,
                           hooks: TrainerHooks | None = None):
    """Any base trainer with original + one augmented view per batch item."""
    return run_method(bank, replace(config, use_augmented_views=True), hooks=hooks)


def run_method(bank: FeatureBank, config: TrainConfig, hooks: TrainerHooks | None = None):
    """Dispatch one training/evaluation run; returns (params-or-None, report)."""
    t0 = time.perf_counter()
    if config.method == "hoso":
        return train_hoso(bank, config, hooks)
    if config.method == "fixed":
        return train_fixed_alpha(bank, config, hooks)
    if config.method == "joint":
        return train_joint(bank, config, hooks)
    if config.method == "svl":
        return train_svl(bank, config, hooks)
    if config.method == "dvc":
        return train_pathclip_dvc(bank, config, hooks)
    if config.method == "random":
        return train_random_alpha(bank, config, hooks)

    report = RunReport(method=config.method, seed=config.seed, config=asdict(config))
    if config.method == "zeroshot":
        classifier = zero_shot_classifier(bank)
    else:  # tip
        support = sample_few_shot(bank, config.shots, config.seed)
        classifier = tip_adapter(bank, support, config.tip_alpha, config.tip_beta)
    if len(bank.test_labels):
        logits = classifier(bank.test_features)
        preds = np.argmax(logits, axis=1)
        report.final_test_accuracy = float(np.mean(preds == bank.test_labels))
        report.per_class_accuracy = [
            float(np.mean(preds[bank.test_labels == c] == c))
            if np.any(bank.test_labels == c) else float("nan")
            for c in range(bank.num_classes)
        ]
    report.wall_clock_seconds = time.perf_counter() - t0
    return None, report

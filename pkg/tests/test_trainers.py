import copy
import json
import os

import numpy as np
import pytest

from hoso_adapter import numerics as nm
from hoso_adapter.errors import ConfigError, DataError
from hoso_adapter.evaluation import add_synthetic_views
from hoso_adapter.featurebank import sample_few_shot, split_hoso_cache
from hoso_adapter.model import AdapterModel, zero_shot_classifier
from hoso_adapter.trainers import (
    METHODS,
    TrainConfig,
    TrainerHooks,
    alpha_svl,
    psi_checksum,
    run_method,
    tip_adapter,
    train_fixed_alpha,
    train_hoso,
    train_joint,
    train_random_alpha,
    train_with_extra_views,
    psi_checksum as _checksum,
)


def quick(method="hoso", **kw):
    base = dict(method=method, shots=4, seed=1, epochs=8)
    base.update(kw)
    return TrainConfig(**base)


class TestConfig:
    def test_defaults_follow_recipe(self):
        c = TrainConfig()
        assert (c.epochs, c.batch_size) == (200, 32)
        assert (c.adapter_lr, c.momentum, c.weight_decay) == (0.002, 0.9, 5e-4)
        assert c.ratio_lr == 0.1 and c.cache_per_class == 1 and c.remove_cache

    def test_rejections(self):
        with pytest.raises(ConfigError):
            TrainConfig(method="adam")
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(alpha_init=0.95)
        with pytest.raises(ConfigError):
            TrainConfig(fixed_alpha=1.5)
        with pytest.raises(ConfigError):
            TrainConfig(blend_mode="additive")


class TestHoso:
    def test_one_shot_rejected(self, small_bank):
        with pytest.raises(ConfigError, match="one shot"):
            train_hoso(small_bank, quick(shots=1))

    def test_cache_not_smaller_than_shots(self, small_bank):
        with pytest.raises(ConfigError):
            train_hoso(small_bank, quick(shots=2, cache_per_class=2))

    def test_alpha_trace_bounded_and_moves(self, small_bank):
        _, report = train_hoso(small_bank, quick())
        trace = np.asarray(report.alpha_trace)
        assert len(trace) == 8
        assert np.all((trace >= 0.1) & (trace <= 0.9))
        assert trace[0] != trace[-1]  # the ratio actually trains

    def test_cache_items_never_in_adapter_batches(self, small_bank):
        config = quick()
        support = sample_few_shot(small_bank, config.shots, config.seed)
        _, cache = split_hoso_cache(support, config.cache_per_class,
                                    config.remove_cache, config.seed)
        cache_idx = set(cache.indices)
        seen = []
        hooks = TrainerHooks(on_batch=lambda epoch, idx: seen.extend(idx))
        train_hoso(small_bank, config, hooks)
        assert seen and not (set(seen) & cache_idx)

    def test_ratio_step_leaves_adapter_weights_alone(self, small_bank):
        before_ratio = {}
        after_ratio = {}
        hooks = TrainerHooks(
            on_adapter_phase_end=lambda e, p: before_ratio.setdefault(e, psi_checksum(p)),
            on_ratio_step_end=lambda e, p: after_ratio.setdefault(e, psi_checksum(p)),
        )
        train_hoso(small_bank, quick(), hooks)
        assert before_ratio and before_ratio == after_ratio

    def test_adapter_phase_leaves_ratio_alone(self, small_bank):
        # within one epoch the logit is touched only by the cache step
        alphas = {"pre": [], "post": []}
        hooks = TrainerHooks(
            on_adapter_phase_end=lambda e, p: alphas["pre"].append(p.alpha_logit),
            on_ratio_step_end=lambda e, p: alphas["post"].append(p.alpha_logit),
        )
        train_hoso(small_bank, quick(), hooks)
        # first adapter phase starts from the init logit (0 for alpha_init=0.5)
        assert alphas["pre"][0] == 0.0
        # each epoch's adapter phase inherits the previous cache update exactly
        assert alphas["pre"][1:] == alphas["post"][:-1]

    def test_deterministic_bit_exact(self, small_bank):
        p1, r1 = train_hoso(small_bank, quick())
        p2, r2 = train_hoso(small_bank, quick())
        assert psi_checksum(p1) == psi_checksum(p2)
        assert p1.alpha_logit == p2.alpha_logit
        assert r1.alpha_trace == r2.alpha_trace
        assert r1.final_test_accuracy == r2.final_test_accuracy

    def test_seed_changes_run(self, small_bank):
        p1, _ = train_hoso(small_bank, quick(seed=1))
        p2, _ = train_hoso(small_bank, quick(seed=2))
        assert psi_checksum(p1) != psi_checksum(p2)

    def test_stays_near_zero_shot_on_separable_bank(self, small_bank):
        # zero-shot is close to ceiling here; training must not wreck it
        _, zs = run_method(small_bank, quick(method="zeroshot"))
        _, report = train_hoso(small_bank, quick(shots=8, epochs=40))
        assert report.final_test_accuracy >= zs.final_test_accuracy - 0.05
        assert report.train_acc_trace[-1] >= report.train_acc_trace[0]

    def test_keep_cache_ablation_runs(self, small_bank):
        _, report = train_hoso(small_bank, quick(remove_cache=False))
        assert len(report.alpha_trace) == 8

    def test_logit_blend_mode(self):
        # wider bank: at dim 8 the two-unit bottleneck can go fully dead,
        # which the logit-space normalization rejects by design
        from hoso_adapter.evaluation import SyntheticSpec, make_synthetic_bank
        bank = make_synthetic_bank(SyntheticSpec(
            num_classes=3, dim=32, within_class_noise=0.3, domain_gap=0.1,
            train_per_class=16, test_per_class=8, seed=11))
        _, report = train_hoso(bank, quick(blend_mode="logit"))
        assert np.all(np.isfinite(report.cache_loss_trace))


class TestFixedAndDerived:
    def test_fixed_alpha_constant_trace(self, small_bank):
        _, report = train_fixed_alpha(small_bank, quick(method="fixed"))
        assert report.alpha_trace == [0.2] * 8
        assert report.extra["fixed_alpha"] == 0.2

    def test_fixed_alpha_out_of_range(self, small_bank):
        with pytest.raises(ConfigError):
            train_fixed_alpha(small_bank, quick(method="fixed"), alpha=1.2)

    def test_svl_alpha_formula(self, small_bank):
        support = sample_few_shot(small_bank, 4, seed=1)
        logits = zero_shot_classifier(small_bank)(support.features)
        expected = 1.0 - float(np.mean(nm.softmax(logits).max(axis=1)))
        assert alpha_svl(small_bank, support) == pytest.approx(expected, abs=1e-12)
        # confidences live in [1/C, 1], so alpha lands in [0, 1 - 1/C]
        assert 0.0 <= expected <= 1.0 - 1.0 / small_bank.num_classes

    def test_svl_run_records_alpha(self, small_bank):
        _, report = run_method(small_bank, quick(method="svl"))
        assert report.alpha_trace == [report.extra["svl_alpha"]] * 8

    def test_random_alpha_seeded(self, small_bank):
        _, r1 = train_random_alpha(small_bank, quick(method="random"))
        _, r2 = train_random_alpha(small_bank, quick(method="random"))
        assert r1.extra["random_alpha"] == r2.extra["random_alpha"]
        assert 0.0 <= r1.extra["random_alpha"] <= 1.0
        _, r3 = train_random_alpha(small_bank, quick(method="random", seed=9))
        assert r3.extra["random_alpha"] != r1.extra["random_alpha"]

    def test_joint_moves_alpha_every_batch(self, small_bank):
        pre = []
        hooks = TrainerHooks(on_adapter_phase_end=lambda e, p: pre.append(p.alpha_logit))
        train_joint(small_bank, quick(method="joint"), hooks)
        assert len(set(pre)) > 1  # the logit moved inside the adapter phase


class TestDvc:
    def test_requires_views(self, small_bank):
        with pytest.raises(DataError, match="views"):
            run_method(small_bank, quick(method="dvc"))

    def test_alpha_stays_in_bounds(self, small_bank):
        bank = copy.deepcopy(small_bank)
        add_synthetic_views(bank, seed=0)
        _, report = run_method(bank, quick(method="dvc"))
        trace = np.asarray(report.alpha_trace)
        assert np.all((trace >= 0.1) & (trace <= 0.9))

    def test_zero_smoothing_freezes_alpha(self, small_bank):
        bank = copy.deepcopy(small_bank)
        add_synthetic_views(bank, seed=0)
        _, report = run_method(bank, quick(method="dvc", dvc_smooth=0.0))
        assert report.alpha_trace == [0.5] * 8


class TestTip:
    def test_alpha_zero_is_zero_shot(self, small_bank):
        support = sample_few_shot(small_bank, 4, seed=1)
        fn = tip_adapter(small_bank, support, alpha=0.0)
        np.testing.assert_allclose(
            fn(small_bank.test_features),
            zero_shot_classifier(small_bank)(small_bank.test_features), atol=1e-12)

    def test_formula_against_loop_oracle(self, small_bank):
        support = sample_few_shot(small_bank, 2, seed=3)
        fn = tip_adapter(small_bank, support, alpha=1.5, beta=2.0)
        x = small_bank.test_features[0]
        got = fn(x)
        xhat = x / np.linalg.norm(x)
        expected = np.array(zero_shot_classifier(small_bank)(x), dtype=np.float64)
        for feat, label in zip(support.features, support.labels):
            fhat = feat / np.linalg.norm(feat)
            expected[label] += 1.5 * np.exp(-2.0 * (1.0 - float(xhat @ fhat)))
        np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_run_method_reports_accuracy(self, small_bank):
        _, report = run_method(small_bank, quick(method="tip"))
        assert 0.0 <= report.final_test_accuracy <= 1.0
        assert report.alpha_trace == []  # training-free


class TestViews:
    def test_requires_views(self, small_bank):
        with pytest.raises(DataError, match="augmented"):
            run_method(small_bank, quick(use_augmented_views=True))

    def test_doubles_batches(self, small_bank):
        bank = copy.deepcopy(small_bank)
        add_synthetic_views(bank, seed=0)
        _, report = train_with_extra_views(bank, quick(method="fixed", epochs=2))
        assert report.config["use_augmented_views"] is True
        assert len(report.alpha_trace) == 2

    def test_changes_resulting_weights(self, small_bank):
        bank = copy.deepcopy(small_bank)
        add_synthetic_views(bank, seed=0)
        p_plain, _ = train_fixed_alpha(bank, quick(method="fixed", epochs=2))
        p_views, _ = train_with_extra_views(bank, quick(method="fixed", epochs=2))
        assert psi_checksum(p_plain) != psi_checksum(p_views)


class TestReports:
    def test_all_methods_produce_final_accuracy(self, small_bank):
        bank = copy.deepcopy(small_bank)
        add_synthetic_views(bank, seed=0)
        for method in METHODS:
            _, report = run_method(bank, quick(method=method, epochs=2))
            assert report.method == method
            assert report.final_test_accuracy is not None
            assert len(report.per_class_accuracy) == bank.num_classes

    def test_save_layout(self, small_bank, tmp_path):
        _, report = train_hoso(small_bank, quick(eval_epoch_test=True))
        out = str(tmp_path / "run")
        report.save(out)
        data = json.load(open(os.path.join(out, "report.json")))
        assert data["method"] == "hoso"
        assert len(data["alpha_trace"]) == 8
        assert len(data["train_test_gap_trace"]) == 8
        with open(os.path.join(out, "trace.csv")) as fh:
            lines = fh.read().strip().splitlines()
        assert lines[0] == "epoch,alpha,lr,train_acc,cache_loss,test_acc"
        assert len(lines) == 9

    def test_gap_trace_matches_traces(self, small_bank):
        _, report = train_hoso(small_bank, quick(eval_epoch_test=True))
        gaps = report.gap_trace
        for g, tr, te in zip(gaps, report.train_acc_trace, report.test_acc_trace):
            assert g == pytest.approx(tr - te)

    def test_lr_trace_is_cosine(self, small_bank):
        _, report = train_hoso(small_bank, quick())
        assert report.lr_trace[0] == pytest.approx(0.002)
        assert report.lr_trace[4] == pytest.approx(0.001)
        assert all(a > b for a, b in zip(report.lr_trace, report.lr_trace[1:]))

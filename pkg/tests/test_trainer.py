"""Two-phase training: pretraining isolation, discovery mechanics, and
bit-exact determinism."""

import json

import numpy as np
import pytest

from ncdlab import trainer
from ncdlab.config import ExperimentConfig
from ncdlab.model import DiscoveryNet


def quick_config(**overrides):
    base = dict(
        num_classes=4, samples_per_class=40, test_samples_per_class=10,
        input_dim=8, separation=5.0, encoder_hidden=(16,), feature_dim=8,
        num_heads=2, overcluster_factor=2, projection_hidden=12,
        projection_out=6, pretrain_epochs=8, discovery_epochs=6,
        batch_size=32, warmup_epochs=2, seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def build(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2**32 - 1]))
    return cfg.make_dataset(), DiscoveryNet(cfg.model_config(), rng)


class TestPretrain:
    def test_reaches_high_labeled_accuracy(self):
        cfg = quick_config(pretrain_epochs=25)
        ds, model = build(cfg)
        trainer.pretrain(model, ds.train_data(), cfg.train_config(),
                         cfg.augment_policy())
        logits = model.forward(ds.labeled_x).labeled.value
        acc = np.mean(np.argmax(logits, axis=1) == ds.labeled_y)
        assert acc >= 0.99

    def test_loss_curve_finite(self):
        cfg = quick_config()
        ds, model = build(cfg)
        result = trainer.pretrain(model, ds.train_data(), cfg.train_config(),
                                  cfg.augment_policy())
        assert len(result.loss_curve) == cfg.pretrain_epochs
        assert np.all(np.isfinite(result.loss_curve))

    def test_unlabeled_heads_untouched(self):
        cfg = quick_config()
        ds, model = build(cfg)
        before = {k: v.value.copy() for k, v in model.named_parameters().items()
                  if not k.startswith(("encoder.", "labeled."))}
        trainer.pretrain(model, ds.train_data(), cfg.train_config(),
                         cfg.augment_policy())
        for k, v in before.items():
            np.testing.assert_array_equal(v, model.param(k).value)

    def test_encoder_does_change(self):
        cfg = quick_config()
        ds, model = build(cfg)
        before = model.param("encoder.w0").value.copy()
        trainer.pretrain(model, ds.train_data(), cfg.train_config(),
                         cfg.augment_policy())
        assert not np.array_equal(before, model.param("encoder.w0").value)


class TestDiscover:
    def test_runs_with_identity_views_and_swap(self):
        cfg = quick_config(augment="none", aggregation="swap", discovery_epochs=3)
        ds, model = build(cfg)
        result = trainer.discover(model, ds.train_data(), cfg.train_config(),
                                  cfg.augment_policy(), cfg.objective_config())
        assert np.all(np.isfinite(result.loss_curve))

    def test_records_carry_heads_lr_and_entropy(self, tmp_path):
        cfg = quick_config(discovery_epochs=3)
        ds, model = build(cfg)
        log = tmp_path / "log.jsonl"
        result = trainer.discover(model, ds.train_data(), cfg.train_config(),
                                  cfg.augment_policy(), cfg.objective_config(),
                                  log_path=log)
        last = result.records[-1]
        for key in ("loss", "lr", "loss_clustering0", "loss_clustering1",
                    "loss_overclustering0", "usage_entropy_0", "usage_entropy_1"):
            assert key in last
        parsed = [json.loads(line) for line in log.read_text().splitlines()]
        assert parsed == result.records

    def test_best_head_matches_recorded_losses(self):
        cfg = quick_config(discovery_epochs=4)
        ds, model = build(cfg)
        result = trainer.discover(model, ds.train_data(), cfg.train_config(),
                                  cfg.augment_policy(), cfg.objective_config())
        losses = result.final_head_losses
        assert len(losses) == cfg.num_heads
        assert result.best_head == int(np.argmin(losses))

    def test_bit_identical_given_seed(self):
        cfg = quick_config(discovery_epochs=3)
        finals = []
        for _ in range(2):
            ds, model = build(cfg)
            trainer.pretrain(model, ds.train_data(), cfg.train_config(),
                             cfg.augment_policy())
            trainer.discover(model, ds.train_data(), cfg.train_config(),
                             cfg.augment_policy(), cfg.objective_config())
            finals.append({k: v.value.copy()
                           for k, v in model.named_parameters().items()})
        for key in finals[0]:
            np.testing.assert_array_equal(finals[0][key], finals[1][key])

    def test_interval_checkpoints_written(self, tmp_path):
        cfg = quick_config(discovery_epochs=4)
        ds, model = build(cfg)
        trainer.discover(model, ds.train_data(), cfg.train_config(),
                         cfg.augment_policy(), cfg.objective_config(),
                         checkpoint_every=2, checkpoint_dir=tmp_path)
        assert (tmp_path / "checkpoint_epoch2.npz").exists()
        assert not (tmp_path / "checkpoint_epoch4.npz").exists()  # final is the caller's

    def test_usage_entropy_helper(self):
        assert trainer.usage_entropy(np.array([5, 5, 5, 5])) == pytest.approx(
            np.log(4), abs=1e-12
        )
        assert trainer.usage_entropy(np.array([10, 0, 0, 0])) == 0.0
        assert trainer.usage_entropy(np.zeros(4, dtype=int)) == 0.0

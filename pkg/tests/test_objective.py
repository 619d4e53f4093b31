"""Padding identities, swapped-prediction symmetry, aggregation modes, and
the stop-gradient contract."""

import numpy as np
import pytest

from ncdlab import numgrad as ng
from ncdlab import objective as obj
from ncdlab.data import ViewPair
from ncdlab.model import DiscoveryNet, ModelConfig


def tiny_model(seed=0, num_heads=1, overcluster_factor=1):
    cfg = ModelConfig(input_dim=5, encoder_hidden=(6,), feature_dim=4,
                      num_labeled=3, num_unlabeled=3,
                      overcluster_factor=overcluster_factor, num_heads=num_heads,
                      projection_hidden=6, projection_out=4, temperature=0.1)
    return DiscoveryNet(cfg, np.random.default_rng(seed))


def make_pair(rng, n_labeled=4, n_unlabeled=4, identical=False, num_classes=3):
    n = n_labeled + n_unlabeled
    v1 = rng.normal(size=(n, 5))
    v2 = v1.copy() if identical else rng.normal(size=(n, 5))
    mask = np.arange(n) < n_labeled
    gt = np.where(mask, rng.integers(0, num_classes, size=n), -1)
    return ViewPair(v1=v1, v2=v2, labeled_mask=mask, ground_truth=gt)


class TestPadding:
    def test_class_two_of_five(self):
        y = np.zeros(5)
        y[2] = 1.0
        np.testing.assert_array_equal(
            obj.pad_label(y, 5), [0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
        )

    def test_zero_width_padding_is_identity(self):
        y = np.zeros(4)
        y[1] = 1.0
        np.testing.assert_array_equal(obj.pad_label(y, 0), y)

    def test_overclustering_width(self):
        y = np.zeros(5)
        y[0] = 1.0
        padded = obj.pad_label(y, 6)
        assert padded.shape == (11,) and padded.sum() == 1.0

    def test_uniform_pseudo(self):
        np.testing.assert_array_equal(
            obj.pad_pseudo(np.full(4, 0.25), 5),
            [0, 0, 0, 0, 0, 0.25, 0.25, 0.25, 0.25],
        )

    def test_hard_pseudo_is_shifted_one_hot(self):
        y = np.zeros(4)
        y[0] = 1.0
        padded = obj.pad_pseudo(y, 5)
        assert padded[5] == 1.0 and padded.sum() == 1.0

    def test_sinkhorn_column_pipeline(self, rng):
        from ncdlab import sinkhorn

        problem = sinkhorn.SinkhornProblem(rng.uniform(-1, 1, size=(4, 6)))
        pseudo = sinkhorn.solve(problem).per_sample()
        padded = obj.pad_pseudo(pseudo[0], 5)
        assert padded.sum() == pytest.approx(1.0, abs=1e-9)

    def test_rejects_invalid_inputs(self):
        with pytest.raises(ValueError):
            obj.pad_label(np.array([0.5, 0.5]), 2)
        with pytest.raises(ValueError):
            obj.pad_pseudo(np.array([0.7, 0.7]), 2)

    def test_supports_disjoint(self):
        y = np.zeros(3)
        y[1] = 1.0
        gt = obj.pad_label(y, 4)
        pseudo = obj.pad_pseudo(np.full(4, 0.25), 3)
        assert float(gt @ pseudo) == 0.0


class TestSwappedLoss:
    def test_labeled_only_batch_mode_independent(self, rng):
        model = tiny_model()
        pair = make_pair(rng, n_labeled=6, n_unlabeled=0)
        values = [
            float(obj.swapped_loss(model, pair, "clustering", 0,
                                   obj.ObjectiveConfig(aggregation=mode)).value)
            for mode in obj.AGGREGATIONS
        ]
        assert values[0] == pytest.approx(values[1], abs=1e-12)
        assert values[0] == pytest.approx(values[2], abs=1e-12)

    def test_view_exchange_symmetry(self, rng):
        model = tiny_model()
        pair = make_pair(rng)
        swapped = ViewPair(v1=pair.v2, v2=pair.v1,
                           labeled_mask=pair.labeled_mask,
                           ground_truth=pair.ground_truth)
        cfg = obj.ObjectiveConfig(aggregation="swap")
        a = float(obj.swapped_loss(model, pair, "clustering", 0, cfg).value)
        b = float(obj.swapped_loss(model, swapped, "clustering", 0, cfg).value)
        assert a == pytest.approx(b, abs=1e-12)

    def test_identical_views_swap_equals_avg_pseudo(self, rng):
        model = tiny_model()
        pair = make_pair(rng, identical=True)
        a = float(obj.swapped_loss(model, pair, "clustering", 0,
                                   obj.ObjectiveConfig(aggregation="swap")).value)
        b = float(obj.swapped_loss(model, pair, "clustering", 0,
                                   obj.ObjectiveConfig(aggregation="avg_pseudo")).value)
        assert a == pytest.approx(b, abs=1e-9)

    def test_unknown_aggregation_rejected(self):
        with pytest.raises(ValueError):
            obj.ObjectiveConfig(aggregation="median")

    def test_stop_gradient_pseudo_is_constant(self, rng):
        # gradients must equal those computed with the pseudo-labels frozen
        model = tiny_model()
        pair = make_pair(rng)
        cfg = obj.ObjectiveConfig()
        loss = obj.swapped_loss(model, pair, "clustering", 0, cfg)
        for p in model.parameters():
            p.grad[...] = 0.0
        ng.backward(loss)
        live_grads = {k: n.grad.copy() for k, n in model.named_parameters().items()}

        # recompute with the same pseudo-labels precomputed as constants
        bundle1 = model.forward(pair.v1)
        bundle2 = model.forward(pair.v2)
        unl = ~pair.labeled_mask
        pseudo_v1 = obj.pseudo_labels(bundle2.head("clustering", 0).value[unl], cfg)
        pseudo_v2 = obj.pseudo_labels(bundle1.head("clustering", 0).value[unl], cfg)
        t1 = obj._joint_targets(pair, pseudo_v1, 3, 3)
        t2 = obj._joint_targets(pair, pseudo_v2, 3, 3)
        frozen = ng.add(
            ng.softmax_ce(ng.concat_cols(bundle1.labeled,
                                         bundle1.head("clustering", 0)), t1, 0.1),
            ng.softmax_ce(ng.concat_cols(bundle2.labeled,
                                         bundle2.head("clustering", 0)), t2, 0.1),
        )
        for p in model.parameters():
            p.grad[...] = 0.0
        ng.backward(frozen)
        assert float(frozen.value) == pytest.approx(float(loss.value), abs=1e-12)
        for k, n in model.named_parameters().items():
            np.testing.assert_allclose(n.grad, live_grads[k], atol=1e-12)


class TestTotalLoss:
    def test_minimal_configuration_averages_two_heads(self, rng):
        model = tiny_model(num_heads=1)
        pair = make_pair(rng)
        cfg = obj.ObjectiveConfig()
        total = obj.total_loss(model, pair, cfg)
        assert set(total.head_losses) == {"clustering0", "overclustering0"}
        mean = np.mean(list(total.head_losses.values()))
        assert total.value == pytest.approx(mean, abs=1e-9)

    def test_finite_positive_at_initialization(self, rng):
        total = obj.total_loss(tiny_model(num_heads=2), make_pair(rng),
                               obj.ObjectiveConfig())
        assert np.isfinite(total.value) and total.value > 0

    def test_head_averaging_matches_per_head_swapped_losses(self, rng):
        model = tiny_model(num_heads=2)
        pair = make_pair(rng)
        cfg = obj.ObjectiveConfig()
        total = obj.total_loss(model, pair, cfg)
        singles = [
            float(obj.swapped_loss(model, pair, kind, i, cfg).value)
            for kind in ("clustering", "overclustering")
            for i in range(2)
        ]
        assert total.value == pytest.approx(np.mean(singles), abs=1e-9)

    def test_labeled_only_equals_supervised_ce_per_head(self, rng):
        model = tiny_model(num_heads=2)
        pair = make_pair(rng, n_labeled=6, n_unlabeled=0)
        total = obj.total_loss(model, pair, obj.ObjectiveConfig())
        assert np.isfinite(total.value)
        # the labeled-head logits contribution is shared; per-head losses
        # differ only through each head's own (unsupervised-block) logits
        assert len(total.head_losses) == 4

    def test_overclustering_ablation_drops_heads(self, rng):
        model = tiny_model(num_heads=2)
        total = obj.total_loss(model, make_pair(rng),
                               obj.ObjectiveConfig(use_overclustering=False))
        assert set(total.head_losses) == {"clustering0", "clustering1"}

    def test_split_objective_mode_runs_and_differs(self, rng):
        model = tiny_model()
        pair = make_pair(rng)
        joint = obj.total_loss(model, pair, obj.ObjectiveConfig())
        split = obj.total_loss(model, pair, obj.ObjectiveConfig(concat_logits=False))
        assert np.isfinite(split.value)
        assert split.value != pytest.approx(joint.value, abs=1e-9)

    def test_greedy_mode_uses_argmax_labels(self, rng):
        model = tiny_model()
        pair = make_pair(rng)
        total = obj.total_loss(model, pair,
                               obj.ObjectiveConfig(pseudo_mode="greedy"))
        counts = total.pseudo_counts
        assert counts.sum() == 2 * int((~pair.labeled_mask).sum())

    def test_gradient_check_through_full_objective(self, rng):
        # stop-gradient means targets are constants of the differentiated
        # function, so freeze them before taking finite differences
        from helpers import (FD_TOL, fd_gradient_against, freeze_targets,
                             frozen_total_loss, max_rel_error)

        model = tiny_model()
        pair = make_pair(rng, n_labeled=2, n_unlabeled=3)
        cfg = obj.ObjectiveConfig()
        targets = freeze_targets(model, pair, cfg)

        live = obj.total_loss(model, pair, cfg)
        frozen = frozen_total_loss(model, pair, targets)
        assert float(frozen.value) == pytest.approx(live.value, abs=1e-12)

        for p in model.parameters():
            p.grad[...] = 0.0
        ng.backward(frozen)
        for name in ("encoder.w0", "labeled.prototypes", "clustering0.w2",
                     "overclustering0.prototypes"):
            node = model.param(name)
            numeric = fd_gradient_against(
                lambda: frozen_total_loss(model, pair, targets).value.item(), node
            )
            assert max_rel_error(node.grad, numeric) <= FD_TOL, name

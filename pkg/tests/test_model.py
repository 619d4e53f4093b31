"""Network shape contracts, normalization postconditions, determinism, and
checkpoint round-trips."""

import numpy as np
import pytest

from ncdlab import numgrad as ng
from ncdlab.model import DiscoveryNet, ModelConfig


def tiny_config(**overrides):
    base = dict(input_dim=6, encoder_hidden=(8,), feature_dim=5, num_labeled=3,
                num_unlabeled=4, overcluster_factor=2, num_heads=2,
                projection_hidden=7, projection_out=4, temperature=0.1)
    base.update(overrides)
    return ModelConfig(**base)


def make_model(seed=0, **overrides):
    return DiscoveryNet(tiny_config(**overrides), np.random.default_rng(seed))


class TestConfig:
    def test_derived_widths(self):
        cfg = tiny_config()
        assert cfg.num_overcluster == 8
        assert cfg.num_classes == 7

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            tiny_config(temperature=0.0)
        with pytest.raises(ValueError):
            tiny_config(num_heads=0)
        with pytest.raises(ValueError):
            tiny_config(overcluster_factor=0)


class TestEncode:
    def test_empty_batch(self):
        z = make_model().encode(np.empty((0, 6)))
        assert z.value.shape == (0, 5)

    def test_rows_unit_norm(self, rng):
        z = make_model().encode(rng.normal(size=(10, 6)))
        np.testing.assert_allclose(np.linalg.norm(z.value, axis=1), 1.0, atol=1e-9)

    def test_deterministic_across_runs(self, rng):
        x = rng.normal(size=(4, 6))
        a = make_model(seed=5).encode(x).value
        b = make_model(seed=5).encode(x).value
        np.testing.assert_array_equal(a, b)

    def test_rejects_wrong_width(self, rng):
        with pytest.raises(ValueError):
            make_model().encode(rng.normal(size=(3, 7)))


class TestForward:
    def test_logit_widths(self, rng):
        model = make_model()
        bundle = model.forward(rng.normal(size=(5, 6)))
        assert bundle.labeled.shape == (5, 3)
        assert all(h.shape == (5, 4) for h in bundle.clustering)
        assert all(h.shape == (5, 8) for h in bundle.overclustering)
        assert len(bundle.clustering) == len(bundle.overclustering) == 2

    def test_cosine_logits_bounded(self, rng):
        bundle = make_model().forward(rng.normal(size=(20, 6)))
        for node in [bundle.labeled, *bundle.clustering, *bundle.overclustering]:
            assert np.all(np.abs(node.value) <= 1.0 + 1e-9)

    def test_heads_differ_at_initialization(self, rng):
        bundle = make_model().forward(rng.normal(size=(5, 6)))
        assert not np.allclose(bundle.clustering[0].value, bundle.clustering[1].value)

    def test_views_share_parameters(self, rng):
        # gradients from two forward passes accumulate into the same arrays
        model = make_model()
        x1, x2 = rng.normal(size=(4, 6)), rng.normal(size=(4, 6))
        t = np.full((4, 7), 1 / 7)
        for x in (x1, x2):
            bundle = model.forward(x)
            loss = ng.softmax_ce(ng.concat_cols(bundle.labeled, bundle.clustering[0]),
                                 t, 0.1)
            ng.backward(loss)
        proto = model.param("labeled.prototypes")
        assert np.abs(proto.grad).sum() > 0

    def test_invariant_concat_order_is_labeled_then_unlabeled(self, rng):
        model = make_model()
        x = rng.normal(size=(3, 6))
        bundle = model.forward(x)
        p = model.unified_posterior(bundle, 0, "clustering")
        # labeled block first: width Cl then Cu
        assert p.shape == (3, 7)


class TestPosterior:
    def test_rows_sum_to_one(self, rng):
        model = make_model()
        bundle = model.forward(rng.normal(size=(6, 6)))
        for kind, width in (("clustering", 7), ("overclustering", 11)):
            p = model.unified_posterior(bundle, 1, kind)
            assert p.shape[1] == width
            np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)

    def test_equal_logits_give_uniform(self):
        model = make_model()
        bundle = model.forward(np.zeros((2, 6)))
        # overwrite with equal logits to probe the softmax itself
        bundle.labeled.value[...] = 0.3
        bundle.clustering[0].value[...] = 0.3
        p = model.unified_posterior(bundle, 0, "clustering")
        np.testing.assert_allclose(p, 1 / 7, atol=1e-12)

    def test_small_temperature_sharpens_toward_argmax(self, rng):
        x = rng.normal(size=(8, 6))
        sharp = make_model(temperature=0.001)
        mild = make_model(temperature=0.1)
        pm = mild.unified_posterior(mild.forward(x), 0, "clustering")
        ps = sharp.unified_posterior(sharp.forward(x), 0, "clustering")
        np.testing.assert_array_equal(np.argmax(pm, axis=1), np.argmax(ps, axis=1))
        assert ps.max(axis=1).min() > 0.99

    def test_invalid_head_rejected(self, rng):
        model = make_model()
        bundle = model.forward(rng.normal(size=(2, 6)))
        with pytest.raises(IndexError):
            model.unified_posterior(bundle, 5, "clustering")
        with pytest.raises(ValueError):
            model.unified_posterior(bundle, 0, "moonclustering")


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        model = make_model(seed=11)
        path = tmp_path / "model.npz"
        model.save(path, extras={"head_losses": np.array([0.5, 0.25])})
        back, extras = DiscoveryNet.load(path)
        for name, node in model.named_parameters().items():
            np.testing.assert_array_equal(node.value, back.param(name).value)
        np.testing.assert_array_equal(extras["head_losses"], [0.5, 0.25])
        x = rng.normal(size=(4, 6))
        np.testing.assert_array_equal(model.encode(x).value, back.encode(x).value)

    def test_copy_is_independent(self, rng):
        model = make_model()
        dup = model.copy()
        model.param("labeled.prototypes").value += 1.0
        assert not np.array_equal(dup.param("labeled.prototypes").value,
                                  model.param("labeled.prototypes").value)

    def test_pretrain_scope_excludes_heads(self):
        model = make_model()
        scoped = set(map(id, model.parameters("pretrain")))
        assert id(model.param("labeled.prototypes")) in scoped
        assert id(model.param("encoder.w0")) in scoped
        assert id(model.param("clustering0.prototypes")) not in scoped

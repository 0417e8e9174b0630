"""Layer tests: shapes, values against straight-line numpy, parameter
traversal, and train/eval mode behavior."""

import numpy as np
import pytest

from foalnet.layers import (
    CrossAttentionLayer,
    DropoutLayer,
    LayerNormLayer,
    LinearLayer,
    Module,
    ProjectionMLP,
)
from foalnet.tensor import ShapeError, Tensor, grad_check, power, tsum

import oracles


@pytest.fixture
def rng():
    return np.random.default_rng(100)


def test_linear_matches_affine_map(rng):
    lin = LinearLayer(5, 3, rng)
    x = rng.standard_normal((4, 5))
    got = lin(Tensor(x)).data
    np.testing.assert_allclose(got, x @ lin.W.data + lin.b.data, atol=1e-14)


def test_linear_rank3_input(rng):
    lin = LinearLayer(4, 2, rng)
    x = rng.standard_normal((3, 5, 4))
    assert lin(Tensor(x)).shape == (3, 5, 2)


def test_linear_rejects_wrong_last_axis(rng):
    lin = LinearLayer(4, 2, rng)
    with pytest.raises(ShapeError):
        lin(Tensor(np.zeros((3, 5))))


def test_linear_init_bounds(rng):
    lin = LinearLayer(16, 8, rng)
    bound = 1.0 / np.sqrt(16)
    assert np.abs(lin.W.data).max() <= bound
    assert np.abs(lin.b.data).max() <= bound


class TestDropout:
    def test_eval_mode_is_identity(self, rng):
        drop = DropoutLayer(0.5, rng)
        drop.mode = "eval"
        x = Tensor(rng.standard_normal((10, 10)))
        assert drop(x) is x

    def test_rate_zero_is_identity_even_in_train(self, rng):
        drop = DropoutLayer(0.0, rng)
        x = Tensor(rng.standard_normal((5, 5)))
        assert drop(x) is x

    def test_train_mode_zeroes_and_rescales(self):
        drop = DropoutLayer(0.5, np.random.default_rng(0))
        x = Tensor(np.ones((100, 100)))
        out = drop(x).data
        kept = out != 0.0
        # survivors are scaled by 1/keep, and roughly half survive
        np.testing.assert_allclose(out[kept], 2.0)
        assert 0.4 < kept.mean() < 0.6

    def test_invalid_rate_rejected(self, rng):
        with pytest.raises(ValueError):
            DropoutLayer(1.0, rng)
        with pytest.raises(ValueError):
            DropoutLayer(-0.1, rng)

    def test_deterministic_given_generator_seed(self):
        a = DropoutLayer(0.3, np.random.default_rng(7))
        b = DropoutLayer(0.3, np.random.default_rng(7))
        x = Tensor(np.ones((8, 8)))
        np.testing.assert_array_equal(a(x).data, b(x).data)


def test_projection_mlp_matches_oracle(rng):
    mlp = ProjectionMLP(6, 10, 4, 0.0, rng).eval()
    x = rng.standard_normal((5, 6))
    p = {f"mlp.{k}": v.data for k, v in mlp.named_parameters()}
    want = oracles.project_np(p, "mlp", x)
    np.testing.assert_allclose(mlp(Tensor(x)).data, want, atol=1e-12)


def test_projection_mlp_needs_rank2(rng):
    mlp = ProjectionMLP(6, 10, 4, 0.0, rng)
    with pytest.raises(ShapeError):
        mlp(Tensor(np.zeros((2, 3, 6))))


class TestLayerNorm:
    def test_matches_oracle(self, rng):
        ln = LayerNormLayer(8)
        ln.gain.data = rng.standard_normal(8)
        ln.bias.data = rng.standard_normal(8)
        x = rng.standard_normal((4, 8))
        want = oracles.layer_norm_np(x, ln.gain.data, ln.bias.data)
        np.testing.assert_allclose(ln(Tensor(x)).data, want, atol=1e-12)

    def test_output_is_normalized_at_identity_params(self, rng):
        ln = LayerNormLayer(16)
        out = ln(Tensor(rng.standard_normal((6, 16)))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=-1), 1.0, atol=1e-3)

    def test_rejects_tiny_dim(self):
        with pytest.raises(ShapeError):
            LayerNormLayer(1)

    def test_gradcheck(self, rng):
        ln = LayerNormLayer(5)
        x = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 5)))
        err = grad_check(lambda: tsum(ln(x) * w), [x] + ln.parameters())
        assert err < 1e-8


class TestCrossAttention:
    def test_output_shape_equals_query_shape(self, rng):
        attn = CrossAttentionLayer(8, 6, 2, 0.0, rng)
        q = Tensor(rng.standard_normal((3, 5, 8)))
        kv = Tensor(rng.standard_normal((3, 7, 6)))
        assert attn(q, kv).shape == (3, 5, 8)

    def test_matches_oracle(self, rng):
        attn = CrossAttentionLayer(6, 4, 3, 0.0, rng).eval()
        q = rng.standard_normal((2, 4, 6))
        kv = rng.standard_normal((2, 3, 4))
        p = {f"layer.{k}": v.data for k, v in attn.named_parameters()}
        want = oracles.attention_layer_np(p, "layer", q, kv, heads=3)
        np.testing.assert_allclose(attn(Tensor(q), Tensor(kv)).data, want,
                                   atol=1e-12)

    def test_attention_rows_are_stochastic(self, rng):
        attn = CrossAttentionLayer(8, 6, 2, 0.0, rng)
        q = Tensor(rng.standard_normal((2, 5, 8)))
        kv = Tensor(rng.standard_normal((2, 7, 6)))
        for weights in attn.attention_weights(q, kv):
            np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)
            assert (weights >= 0.0).all()

    def test_head_count_must_divide_dim(self, rng):
        with pytest.raises(ShapeError):
            CrossAttentionLayer(8, 6, 3, 0.0, rng)

    def test_batch_mismatch_rejected(self, rng):
        attn = CrossAttentionLayer(8, 6, 2, 0.0, rng)
        with pytest.raises(ShapeError):
            attn(Tensor(np.zeros((2, 5, 8))), Tensor(np.zeros((3, 7, 6))))

    def test_gradcheck_all_params(self, rng):
        attn = CrossAttentionLayer(4, 6, 2, 0.0, rng).eval()
        q = Tensor(rng.standard_normal((2, 3, 4)))
        kv = Tensor(rng.standard_normal((2, 2, 6)))
        err = grad_check(lambda: tsum(power(attn(q, kv), 2.0)), attn.parameters())
        assert err < 1e-6


class TestModuleTraversal:
    def test_names_are_unique_and_reach_every_array(self, rng):
        attn = CrossAttentionLayer(8, 6, 2, 0.1, rng)
        names = [n for n, _ in attn.named_parameters()]
        assert len(names) == len(set(names))
        # 2 heads x 3 projections x (W, b) + norm gain/bias
        assert len(names) == 2 * 3 * 2 + 2

    def test_list_children_get_indexed_names(self, rng):
        class Stack(Module):
            def __init__(self):
                self.items = [LinearLayer(2, 2, rng), LinearLayer(2, 2, rng)]

        names = {n for n, _ in Stack().named_parameters()}
        assert names == {"items.0.W", "items.0.b", "items.1.W", "items.1.b"}

    def test_train_eval_toggles_every_dropout(self, rng):
        mlp = ProjectionMLP(4, 8, 2, 0.5, rng)
        assert mlp.drop.mode == "train"
        mlp.eval()
        assert mlp.drop.mode == "eval"
        mlp.train()
        assert mlp.drop.mode == "train"

    def test_zero_grad_clears(self, rng):
        lin = LinearLayer(3, 2, rng)
        out = tsum(power(lin(Tensor(np.ones((2, 3)))), 2.0))
        out.backward()
        assert lin.W.grad is not None
        lin.zero_grad()
        assert lin.W.grad is None and lin.b.grad is None

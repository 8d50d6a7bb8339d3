"""Network core: forward/backward exactness, loss, SGD, batchnorm."""

import math

import numpy as np
import pytest

from ampli.errors import NonFiniteError, ShapeError
from ampli.nn import BatchNorm, Dense, Network, ReLU, build_mlp, loss_softmax_ce, sgd_step

from oracles import finite_diff_gradients, rel_error, relu_kink_safe


def identity_dense(dim: int) -> Dense:
    layer = Dense(dim, dim, np.random.default_rng(0))
    layer.w[:] = np.eye(dim)
    layer.b[:] = 0.0
    return layer


class TestForward:
    def test_identity_dense(self):
        net = Network([identity_dense(2)])
        logits, _ = net.forward([[1.0, 2.0]])
        np.testing.assert_array_equal(logits, [[1.0, 2.0]])

    def test_relu(self):
        out, _ = ReLU().forward(np.array([[-1.0, 2.0]]), train=True)
        np.testing.assert_array_equal(out, [[0.0, 2.0]])

    def test_batchnorm_train_hand_case(self):
        bn = BatchNorm(1)
        out, _ = bn.forward(np.array([[1.0], [3.0]]), train=True)
        np.testing.assert_allclose(out, [[-1.0], [1.0]], atol=1e-4)

    def test_batchnorm_standardizes_before_scale_shift(self):
        rng = np.random.default_rng(3)
        x = rng.normal(2.0, 3.0, size=(64, 5))
        out, _ = BatchNorm(5).forward(x, train=True)
        # fresh layer has scale 1 / shift 0, so the output is the plain xhat
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        np.testing.assert_allclose(out.var(axis=0), 1.0, atol=1e-3)

    def test_batchnorm_eval_uses_running_stats(self):
        bn = BatchNorm(2)
        rng = np.random.default_rng(5)
        for _ in range(200):
            bn.forward(rng.normal(1.0, 2.0, size=(32, 2)), train=True)
        out, _ = bn.forward(np.array([[1.0, 1.0]]), train=False)
        # a point at the data mean should normalize near zero
        assert np.abs(out).max() < 0.2

    def test_shape_mismatch_names_layer(self):
        net = build_mlp(3, [4], 2, seed=0)
        with pytest.raises(ShapeError, match="layer 0"):
            net.forward(np.zeros((2, 5)))

    def test_incompatible_stack_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError, match="layer 1"):
            Network([Dense(2, 3, rng), Dense(4, 2, rng)])

    def test_non_finite_input_rejected(self):
        net = build_mlp(2, [4], 2, seed=0)
        with pytest.raises(NonFiniteError):
            net.forward(np.array([[1.0, np.nan]]))


class TestLoss:
    def test_uniform_logits(self):
        loss, _ = loss_softmax_ce([[0.0, 0.0]], [0])
        assert loss == pytest.approx(math.log(2.0), abs=1e-12)

    def test_saturated_correct_class_no_overflow(self):
        loss, dlogits = loss_softmax_ce([[1000.0, 0.0]], [0])
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.isfinite(dlogits).all()

    def test_hand_computed_value_and_gradient(self):
        loss, dlogits = loss_softmax_ce([[1.0, 2.0]], [1])
        assert loss == pytest.approx(0.313262, abs=1e-6)
        np.testing.assert_allclose(dlogits, [[0.268941, -0.268941]], atol=1e-6)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="labels"):
            loss_softmax_ce([[0.0, 0.0]], [2])

    def test_non_negative_for_random_logits(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            logits = rng.normal(0.0, 10.0, size=(5, 4))
            labels = rng.integers(0, 4, size=5)
            loss, _ = loss_softmax_ce(logits, labels)
            assert loss >= 0.0


class TestBackward:
    def test_zero_seed_gives_zero_gradients(self):
        net = build_mlp(2, [4], 3, batchnorm=True, seed=1)
        x = np.random.default_rng(2).normal(size=(4, 2))
        _, cache = net.forward(x)
        grads = net.backward(cache, np.zeros((4, 3)))
        for flat in grads.values():
            np.testing.assert_array_equal(flat, 0.0)

    def test_linear_map_gradient(self):
        # y = W x, loss = y_0: the weight column feeding output 0 gets x
        net = Network([Dense(2, 2, np.random.default_rng(0))])
        _, cache = net.forward([[1.0, 2.0]])
        grads = net.backward(cache, np.array([[1.0, 0.0]]))
        dw = grads[0][:4].reshape(2, 2)
        np.testing.assert_array_equal(dw[:, 0], [1.0, 2.0])
        np.testing.assert_array_equal(dw[:, 1], [0.0, 0.0])

    def test_cache_from_other_network_rejected(self):
        a = build_mlp(2, [4], 2, seed=0)
        b = build_mlp(2, [4], 2, seed=0)
        _, cache = a.forward(np.zeros((1, 2)))
        with pytest.raises(ShapeError, match="cache"):
            b.backward(cache, np.zeros((1, 2)))

    def test_eval_cache_rejected(self):
        net = build_mlp(2, [4], 2, seed=0)
        _, cache = net.forward(np.zeros((1, 2)), train=False)
        with pytest.raises(ShapeError, match="train"):
            net.backward(cache, np.zeros((1, 2)))

    @pytest.mark.parametrize("batchnorm", [False, True])
    def test_matches_finite_differences(self, batchnorm):
        rng = np.random.default_rng(7 if batchnorm else 8)
        checked = 0
        while checked < 3:
            depth = rng.integers(1, 4)
            hidden = [int(rng.integers(2, 17)) for _ in range(depth)]
            net = build_mlp(3, hidden, 3, batchnorm=batchnorm, seed=int(rng.integers(1e6)))
            x = rng.normal(size=(int(rng.integers(2, 9)), 3))
            y = rng.integers(0, 3, size=x.shape[0])
            if not relu_kink_safe(net, x):
                continue
            checked += 1
            logits, cache = net.forward(x)
            _, dlogits = loss_softmax_ce(logits, y)
            grads = net.backward(cache, dlogits)
            expected = finite_diff_gradients(net, x, y)
            worst = max(
                rel_error(a, b)
                for lid in grads
                for a, b in zip(grads[lid], expected[lid])
            )
            assert worst < 1e-5


class TestSgd:
    def test_one_dimensional_step(self):
        net = Network([Dense(1, 1, np.random.default_rng(0))])
        net.layers[0].w[:] = 1.0
        net.layers[0].b[:] = 0.0
        sgd_step(net, {0: np.array([0.3, 0.0])}, lr=0.1)
        assert net.layers[0].w[0, 0] == 1.0 - 0.1 * 0.3

    def test_zero_gradient_is_fixed_point(self):
        net = build_mlp(2, [4], 2, batchnorm=True, seed=3)
        before = [p.copy() for p in net.parameters()]
        grads = {lid: np.zeros(layer.n_params) for lid, layer in net.param_layers}
        sgd_step(net, grads, lr=0.5)
        for old, new in zip(before, net.parameters()):
            np.testing.assert_array_equal(old, new)

    def test_quadratic_two_steps_closed_form(self):
        # loss w^2 has gradient 2w; two lr=0.1 steps from w=1 give 0.64
        net = Network([Dense(1, 1, np.random.default_rng(0))])
        net.layers[0].w[:] = 1.0
        net.layers[0].b[:] = 0.0
        for _ in range(2):
            w = net.layers[0].w[0, 0]
            sgd_step(net, {0: np.array([2.0 * w, 0.0])}, lr=0.1)
        assert net.layers[0].w[0, 0] == pytest.approx(0.64, abs=1e-15)

    def test_missing_layer_rejected(self):
        net = build_mlp(2, [4], 2, seed=0)
        with pytest.raises(ValueError, match="missing layer"):
            sgd_step(net, {0: np.zeros(net.layers[0].n_params)}, lr=0.1)

    def test_running_stats_untouched(self):
        net = build_mlp(2, [4], 2, batchnorm=True, seed=0)
        bn = net.layers[1]
        net.forward(np.random.default_rng(0).normal(size=(8, 2)), train=True)
        rm, rv = bn.running_mean.copy(), bn.running_var.copy()
        grads = {lid: np.ones(layer.n_params) for lid, layer in net.param_layers}
        sgd_step(net, grads, lr=0.1)
        np.testing.assert_array_equal(bn.running_mean, rm)
        np.testing.assert_array_equal(bn.running_var, rv)


class TestDeterminism:
    def test_same_seed_bitwise_identical_params(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(16, 2))
        y = rng.integers(0, 2, size=16)

        def train():
            net = build_mlp(2, [8, 8], 2, batchnorm=True, seed=42)
            for _ in range(5):
                logits, cache = net.forward(x)
                _, dlogits = loss_softmax_ce(logits, y)
                sgd_step(net, net.backward(cache, dlogits), lr=0.05)
            return net

        a, b = train(), train()
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa, pb)

    def test_outputs_stay_finite(self):
        net = build_mlp(2, [8], 2, batchnorm=True, seed=1)
        x = np.random.default_rng(4).normal(size=(8, 2))
        logits, cache = net.forward(x)
        assert np.isfinite(logits).all()
        loss, dlogits = loss_softmax_ce(logits, [0] * 8)
        grads = net.backward(cache, dlogits)
        assert math.isfinite(loss)
        assert all(np.isfinite(g).all() for g in grads.values())

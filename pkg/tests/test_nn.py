"""Numerical core: forward/backward, softmax, Adam, initialization."""

import numpy as np
import numpy.testing as npt
import pytest

from hetfed import (AdamState, ArchitectureRegistry, ConfigurationError, Dense,
                    DimensionError, Model, ReLU, StateError, adam_step, cross_entropy,
                    one_hot, register_builtin_zoo, softmax)
from hetfed.architectures import cnn_small_spec, build_model

import oracles


def linear_model(w, b=None, arch_id="test"):
    w = np.asarray(w, dtype=np.float64)
    layer = Dense("dense_0", w.shape[0], w.shape[1])
    layer.params["w"][...] = w
    if b is not None:
        layer.params["b"][...] = b
    return Model([layer], arch_id)


class TestForward:
    def test_zero_weights_give_zero_logits(self):
        model = linear_model(np.zeros((3, 4)))
        out = model.forward(np.random.default_rng(0).normal(size=(5, 3)))
        npt.assert_array_equal(out, np.zeros((5, 4)))

    def test_identity_dense_passes_input_through(self):
        model = linear_model(np.eye(2))
        npt.assert_array_equal(model.forward([[3.0, 4.0]]), [[3.0, 4.0]])

    def test_two_layer_mlp_matches_hand_arithmetic(self):
        w1 = [[0.5, -1.0, 0.25], [2.0, 0.5, -0.75]]
        b1 = [0.1, -0.2, 0.0]
        w2 = [[1.0, -1.0], [0.5, 0.5], [-2.0, 1.0]]
        b2 = [0.0, 0.3]
        l1 = Dense("dense_0", 2, 3)
        l1.params["w"][...] = w1
        l1.params["b"][...] = b1
        l2 = Dense("dense_2", 3, 2)
        l2.params["w"][...] = w2
        l2.params["b"][...] = b2
        model = Model([l1, ReLU("relu_1"), l2], "hand")
        expected = oracles.forward_dense_relu_by_hand(
            [w1, w2], [b1, b2], [1.0, 1.0], relu_after=[True, False]
        )
        npt.assert_allclose(model.forward([[1.0, 1.0]]), [expected], rtol=1e-14)

    def test_forward_is_pure(self):
        reg = ArchitectureRegistry(6, 3)
        model = reg.init_model("mlp-8", 0)
        x = np.random.default_rng(1).normal(size=(4, 6))
        first = model.forward(x)
        second = model.forward(x)
        npt.assert_array_equal(first, second)

    def test_shape_mismatch_names_layer(self):
        model = linear_model(np.zeros((3, 2)))
        with pytest.raises(DimensionError, match="dense_0"):
            model.forward(np.zeros((1, 5)))

    def test_outputs_finite(self):
        reg = ArchitectureRegistry(6, 3)
        model = reg.init_model("mlp-16-8", 3)
        out = model.forward(np.random.default_rng(2).normal(size=(8, 6)) * 50)
        assert np.all(np.isfinite(out))


class TestBackward:
    def test_zero_upstream_gradient_zeroes_grads(self):
        reg = ArchitectureRegistry(5, 3)
        model = reg.init_model("mlp-7", 0)
        model.forward(np.random.default_rng(0).normal(size=(2, 5)))
        model.backward(np.zeros((2, 3)))
        for _, g in model.named_gradients():
            npt.assert_array_equal(g, np.zeros_like(g))

    def test_hand_differentiated_linear_map(self):
        # L = sum(logits) on batch [[1, 2]]: dW = x^T 1, db = 1.
        model = linear_model(np.zeros((2, 2)))
        model.forward([[1.0, 2.0]])
        model.backward(np.ones((1, 2)))
        npt.assert_array_equal(model.layers[0].grads["w"], [[1.0, 1.0], [2.0, 2.0]])
        npt.assert_array_equal(model.layers[0].grads["b"], [1.0, 1.0])

    def test_backward_before_forward_raises(self):
        model = linear_model(np.zeros((2, 2)))
        with pytest.raises(StateError):
            model.backward(np.zeros((1, 2)))

    def test_grads_overwritten_not_accumulated(self):
        model = linear_model(np.zeros((2, 2)))
        for _ in range(2):
            model.forward([[1.0, 2.0]])
            model.backward(np.ones((1, 2)))
        npt.assert_array_equal(model.layers[0].grads["w"], [[1.0, 1.0], [2.0, 2.0]])

    def test_gradient_matches_finite_differences_mlp(self):
        rng = np.random.default_rng(42)
        reg = ArchitectureRegistry(5, 3)
        model = reg.init_model("mlp-6-4", 7)
        x = rng.normal(size=(3, 5))
        targets = one_hot(rng.integers(0, 3, size=3), 3)

        def loss_of_model(m):
            return cross_entropy(softmax(m.forward(x)), targets).value

        loss = cross_entropy(softmax(model.forward(x)), targets)
        model.backward(loss.grad_wrt_logits)
        analytic = model.get_flat_grads()
        numeric = oracles.model_param_fd(model, loss_of_model)
        oracles.assert_grad_close(analytic, numeric)

    def test_gradient_matches_finite_differences_conv(self):
        rng = np.random.default_rng(3)
        spec = cnn_small_spec(16, 3, filters=2)  # 4x4 input
        model = build_model(spec, seed=5)
        x = rng.normal(size=(2, 16))
        targets = one_hot(rng.integers(0, 3, size=2), 3)

        def loss_of_model(m):
            return cross_entropy(softmax(m.forward(x)), targets).value

        loss = cross_entropy(softmax(model.forward(x)), targets)
        model.backward(loss.grad_wrt_logits)
        oracles.assert_grad_close(model.get_flat_grads(),
                                  oracles.model_param_fd(model, loss_of_model))


class TestSoftmax:
    def test_symmetry(self):
        npt.assert_allclose(softmax([[0.0, 0.0]]), [[0.5, 0.5]], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = softmax([[1000.0, 1000.0, 1000.0]])
        npt.assert_allclose(out, [[1 / 3] * 3], atol=1e-15)
        assert np.all(np.isfinite(out))

    def test_log_ratio_case(self):
        npt.assert_allclose(softmax([[np.log(1.0), np.log(3.0)]]), [[0.25, 0.75]],
                            rtol=1e-14)

    def test_rows_sum_to_one_and_shift_invariance(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(50, 13)) * 10
        p = softmax(z)
        npt.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert p.min() >= 0
        shifted = softmax(z + rng.normal(size=(50, 1)))
        npt.assert_allclose(p, shifted, atol=1e-10)

    def test_matches_hand_softmax(self):
        rows = [[0.3, -1.2, 2.0], [5.0, 5.0, -5.0]]
        npt.assert_allclose(softmax(rows), oracles.softmax_rows_by_hand(rows), rtol=1e-14)

    def test_single_class_rejected(self):
        with pytest.raises(DimensionError):
            softmax([[1.0]])


def hand_adam(w, grads, alpha, beta1=0.9, beta2=0.999, eps=1e-8):
    """Reference scalar Adam recurrence, stepped in plain python."""
    m = v = 0.0
    t = 0
    for g in grads:
        t += 1
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** t)
        vhat = v / (1 - beta2 ** t)
        w = w - alpha * mhat / (vhat ** 0.5 + eps)
    return w


class TestAdam:
    def scalar_model(self, w0=1.0):
        model = linear_model(np.array([[w0]]) , arch_id="scalar")
        # single (1, 1) weight; ignore the bias by zero grads
        return model

    def test_zero_gradients_are_a_noop(self):
        reg = ArchitectureRegistry(4, 3)
        model = reg.init_model("mlp-5", 0)
        state = AdamState.for_model(model, alpha=0.01)
        before = model.get_flat_params()
        for layer in model.layers:
            for k in layer.grads:
                layer.grads[k][...] = 0.0
        adam_step(model, state)
        npt.assert_array_equal(model.get_flat_params(), before)
        assert state.t == 1

    def test_single_step_matches_hand_recurrence(self):
        model = self.scalar_model(1.0)
        state = AdamState.for_model(model, alpha=0.001)
        model.layers[0].grads["w"][...] = 0.5
        adam_step(model, state)
        expected = hand_adam(1.0, [0.5], alpha=0.001)
        npt.assert_allclose(model.layers[0].params["w"][0, 0], expected, rtol=1e-15)
        assert abs(expected - 0.999) < 1e-6  # ~ w - alpha for a fresh state

    def test_two_identical_steps_match_hand_recurrence(self):
        model = self.scalar_model(1.0)
        state = AdamState.for_model(model, alpha=0.001)
        for _ in range(2):
            model.layers[0].grads["w"][...] = 0.5
            adam_step(model, state)
        expected = hand_adam(1.0, [0.5, 0.5], alpha=0.001)
        npt.assert_allclose(model.layers[0].params["w"][0, 0], expected, rtol=1e-15)
        assert state.t == 2

    def test_moment_shapes_checked(self):
        reg = ArchitectureRegistry(4, 3)
        model = reg.init_model("mlp-5", 0)
        state = AdamState.for_model(reg.init_model("mlp-6", 0), alpha=0.01)
        with pytest.raises(ConfigurationError):
            adam_step(model, state)

    def test_second_moment_nonnegative(self):
        reg = ArchitectureRegistry(4, 3)
        model = reg.init_model("mlp-5", 1)
        state = AdamState.for_model(model, alpha=0.01)
        rng = np.random.default_rng(8)
        for _ in range(3):
            model.forward(rng.normal(size=(2, 4)))
            model.backward(rng.normal(size=(2, 3)))
            adam_step(model, state)
        assert all(v.min() >= 0 for v in state.v.values())


class TestInitModel:
    def test_same_seed_is_bit_identical(self):
        reg = ArchitectureRegistry(8, 5)
        a = reg.init_model("mlp-16", 123)
        b = reg.init_model("mlp-16", 123)
        npt.assert_array_equal(a.get_flat_params(), b.get_flat_params())

    def test_different_seed_differs(self):
        reg = ArchitectureRegistry(8, 5)
        a = reg.init_model("mlp-16", 1)
        b = reg.init_model("mlp-16", 2)
        assert not np.array_equal(a.get_flat_params(), b.get_flat_params())

    def test_parsed_mlp_id_shapes(self):
        reg = ArchitectureRegistry(64, 13)
        model = reg.init_model("mlp-64-32", 0)
        dense_shapes = [layer.params["w"].shape for layer in model.layers
                        if layer.kind == "dense"]
        assert dense_shapes == [(64, 64), (64, 32), (32, 13)]
        bias_shapes = [layer.params["b"].shape for layer in model.layers
                       if layer.kind == "dense"]
        assert bias_shapes == [(64,), (32,), (13,)]

    def test_unknown_arch_lists_registered_ids(self):
        reg = ArchitectureRegistry(8, 5)
        register_builtin_zoo(8, 5, reg)
        with pytest.raises(ConfigurationError, match="mlp-shallow"):
            reg.init_model("resnet-152", 0)

    def test_xavier_bounds(self):
        reg = ArchitectureRegistry(8, 5)
        model = reg.init_model("mlp-16", 0)
        w = model.layers[0].params["w"]
        limit = np.sqrt(6.0 / (8 + 16))
        assert np.all(np.abs(w) <= limit)
        npt.assert_array_equal(model.layers[0].params["b"], 0.0)

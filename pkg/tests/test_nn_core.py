"""Layer forward/backward contracts and the gradient tape."""

import numpy as np
import pytest

from dwmrpm import models, optim
from dwmrpm.errors import ContractError, InvalidParameterError, ShapeError
from dwmrpm.nn_core import (
    Activation,
    Conv1DLayer,
    DenseLayer,
    DropoutLayer,
    DropoutMode,
    GradientTape,
    Parameter,
    backward,
    concat_forward,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    global_avg_pool,
    he_init,
)

import oracles


class TestHeInit:
    def test_same_seed_bit_identical(self):
        a = he_init([4], fan_in=2, seed=7)
        b = he_init([4], fan_in=2, seed=7)
        assert np.array_equal(a, b)

    def test_different_seed_differs(self):
        assert not np.array_equal(he_init([4], 2, seed=7), he_init([4], 2, seed=8))

    def test_sample_variance_matches_two_over_fan_in(self):
        values = he_init([100000], fan_in=50, seed=0)
        target = 2.0 / 50
        assert abs(values.var() - target) / target < 0.05
        assert abs(values.mean()) < 0.01

    def test_empty_shape_rejected(self):
        with pytest.raises(ShapeError):
            he_init([], fan_in=3, seed=0)

    def test_bad_fan_in_rejected(self):
        with pytest.raises(InvalidParameterError):
            he_init([4], fan_in=0, seed=0)


def _dense(weights, bias, activation):
    return DenseLayer(Parameter("w", np.asarray(weights, dtype=float)),
                      Parameter("b", np.asarray(bias, dtype=float)),
                      activation)


class TestDenseForward:
    def test_zero_weights_relu_keeps_positive_bias(self):
        layer = _dense(np.zeros((2, 3)), [1.0, -1.0], Activation.RELU)
        out = dense_forward(layer, [5.0, -2.0, 7.0])
        np.testing.assert_array_equal(out, [1.0, 0.0])

    def test_identity_weights_pass_through(self):
        layer = _dense(np.eye(2), [0.0, 0.0], Activation.IDENTITY)
        out = dense_forward(layer, [3.0, -4.0])
        np.testing.assert_array_equal(out, [3.0, -4.0])

    def test_hand_matrix_vector(self):
        layer = _dense([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5], Activation.IDENTITY)
        out = dense_forward(layer, [1.0, 1.0])
        np.testing.assert_allclose(out, [3.5, 6.5], rtol=0, atol=1e-15)

    def test_dimension_mismatch(self):
        layer = _dense(np.eye(2), [0.0, 0.0], Activation.IDENTITY)
        with pytest.raises(ShapeError):
            dense_forward(layer, [1.0, 2.0, 3.0])

    def test_batch_equals_per_sample(self):
        # batched BLAS and row-at-a-time paths may differ in the last ulp
        rng = np.random.default_rng(1)
        layer = _dense(rng.normal(size=(4, 6)), rng.normal(size=4), Activation.RELU)
        x = rng.normal(size=(5, 6))
        batched = dense_forward(layer, x)
        stacked = np.stack([dense_forward(layer, row) for row in x])
        np.testing.assert_allclose(batched, stacked, rtol=0, atol=1e-12)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            out_dim = int(rng.integers(1, 9))
            in_dim = int(rng.integers(1, 9))
            relu = bool(rng.integers(2))
            layer = _dense(rng.normal(size=(out_dim, in_dim)),
                           rng.normal(size=out_dim),
                           Activation.RELU if relu else Activation.IDENTITY)
            x = rng.normal(size=in_dim)
            expected = oracles.dense_oracle(layer.weights.value, layer.bias.value,
                                            x, relu)
            np.testing.assert_allclose(dense_forward(layer, x), expected, atol=1e-10)


def _conv(kernels, biases):
    return Conv1DLayer(Parameter("k", np.asarray(kernels, dtype=float)),
                       Parameter("b", np.asarray(biases, dtype=float)))


class TestConv1dForward:
    def test_shifting_identity_kernel(self):
        layer = _conv([[1.0, 0.0, 0.0, 0.0, 0.0]], [0.0])
        out = conv1d_forward(layer, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        np.testing.assert_array_equal(out, [[1.0, 2.0]])

    def test_averaging_kernel_on_constant(self):
        layer = _conv([[0.2] * 5], [0.0])
        out = conv1d_forward(layer, [10.0] * 8)
        np.testing.assert_allclose(out, [[10.0] * 4], atol=1e-12)

    def test_two_filters_against_triple_loop(self):
        rng = np.random.default_rng(3)
        layer = _conv(rng.normal(size=(2, 5)), rng.normal(size=2))
        x = rng.normal(size=9)
        expected = oracles.conv1d_oracle(layer.kernels.value, layer.biases.value, x)
        np.testing.assert_allclose(conv1d_forward(layer, x), expected, atol=1e-12)

    def test_multichannel_against_triple_loop(self):
        rng = np.random.default_rng(4)
        layer = Conv1DLayer(Parameter("k", rng.normal(size=(3, 4, 5))),
                            Parameter("b", rng.normal(size=3)))
        x = rng.normal(size=(4, 11))
        expected = oracles.conv1d_oracle(layer.kernels.value, layer.biases.value, x)
        np.testing.assert_allclose(conv1d_forward(layer, x), expected, atol=1e-12)

    def test_output_length_rule(self):
        rng = np.random.default_rng(5)
        layer = _conv(rng.normal(size=(3, 5)), np.zeros(3))
        for length in (5, 6, 30):
            out = conv1d_forward(layer, rng.normal(size=length))
            assert out.shape == (3, length - 5 + 1)

    def test_input_shorter_than_kernel(self):
        layer = _conv([[1.0, 0.0, 0.0, 0.0, 0.0]], [0.0])
        with pytest.raises(ShapeError):
            conv1d_forward(layer, [1.0, 2.0, 3.0])

    def test_linearity_with_zero_bias(self):
        rng = np.random.default_rng(6)
        layer = _conv(rng.normal(size=(4, 5)), np.zeros(4))
        x = rng.normal(size=20)
        y = rng.normal(size=20)
        a, b = 1.7, -0.3
        combined = conv1d_forward(layer, a * x + b * y)
        separate = a * conv1d_forward(layer, x) + b * conv1d_forward(layer, y)
        np.testing.assert_allclose(combined, separate, atol=1e-10)


class TestGlobalAvgPool:
    def test_row_means(self):
        out = global_avg_pool(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        np.testing.assert_array_equal(out, [2.0, 5.0])

    def test_single_position_identity(self):
        np.testing.assert_array_equal(global_avg_pool(np.array([[7.0]])), [7.0])

    def test_large_map_against_summation_oracle(self):
        rng = np.random.default_rng(7)
        fmap = rng.normal(size=(100, 106))
        expected = oracles.global_avg_pool_oracle(fmap)
        np.testing.assert_allclose(global_avg_pool(fmap), expected, atol=1e-12)

    def test_zero_positions_rejected(self):
        with pytest.raises(ShapeError):
            global_avg_pool(np.empty((3, 0)))


class TestDropout:
    def test_rate_zero_train_is_identity(self):
        layer = DropoutLayer(0.0, DropoutMode.TRAIN)
        x = np.random.default_rng(8).normal(size=50)
        np.testing.assert_array_equal(
            dropout_forward(layer, x, np.random.default_rng(0)), x)

    def test_eval_is_identity(self):
        layer = DropoutLayer(0.3, DropoutMode.EVAL)
        x = np.random.default_rng(9).normal(size=50)
        np.testing.assert_array_equal(dropout_forward(layer, x, None), x)

    def test_inverted_scaling_preserves_mean(self):
        layer = DropoutLayer(0.3, DropoutMode.TRAIN)
        n = 100_000
        out = dropout_forward(layer, np.ones(n), np.random.default_rng(10))
        # each element is Bernoulli(0.7)/0.7: var = 0.3/0.7, so 3 sigma of the mean
        sigma = np.sqrt((0.3 / 0.7) / n)
        assert abs(out.mean() - 1.0) < 3 * sigma

    def test_rate_one_rejected(self):
        with pytest.raises(InvalidParameterError):
            DropoutLayer(1.0)

    def test_mask_reused_in_backward(self):
        layer = DropoutLayer(0.5, DropoutMode.TRAIN)
        x = np.ones(64)
        tape = GradientTape()
        out = dropout_forward(layer, x, np.random.default_rng(11), tape)
        pooled = global_avg_pool(out[None, :], tape)
        grads = backward(tape, pooled)
        assert grads == {}  # no parameters involved, but the walk must succeed
        # survivors were scaled by 2; zeros must stay zero in the output
        assert set(np.unique(out)) <= {0.0, 2.0}


class TestConcat:
    def test_concat_and_split_gradients(self):
        rng = np.random.default_rng(12)
        a = rng.normal(size=3)
        b = rng.normal(size=2)
        tape = GradientTape()
        merged = concat_forward([a, b], tape)
        np.testing.assert_array_equal(merged, np.concatenate([a, b]))
        layer = _dense(np.ones((1, 5)), [0.0], Activation.IDENTITY)
        out = dense_forward(layer, merged, tape)
        grads = backward(tape, out)
        np.testing.assert_array_equal(grads[layer.weights], merged[None, :])


class TestBackward:
    def test_linear_gradient_is_input(self):
        # f(w) = w * x with x = 3: df/dw = 3
        layer = _dense([[0.5]], [0.0], Activation.IDENTITY)
        tape = GradientTape()
        out = dense_forward(layer, [3.0], tape)
        grads = backward(tape, out)
        np.testing.assert_allclose(grads[layer.weights], [[3.0]])
        np.testing.assert_allclose(grads[layer.bias], [1.0])

    def test_relu_subgradient_at_zero_is_zero(self):
        # pre-activation is exactly 0: w*x + b = 1*3 - 3 = 0
        layer = _dense([[1.0]], [-3.0], Activation.RELU)
        tape = GradientTape()
        out = dense_forward(layer, [3.0], tape)
        assert out[0] == 0.0
        grads = backward(tape, out)
        np.testing.assert_array_equal(grads[layer.weights], [[0.0]])
        np.testing.assert_array_equal(grads[layer.bias], [0.0])

    def test_non_scalar_tape_rejected(self):
        layer = _dense(np.eye(2), [0.0, 0.0], Activation.IDENTITY)
        tape = GradientTape()
        out = dense_forward(layer, [1.0, 2.0], tape)
        with pytest.raises(ContractError):
            backward(tape, out)

    def test_loss_must_be_tape_output(self):
        layer = _dense([[1.0]], [0.0], Activation.IDENTITY)
        tape = GradientTape()
        dense_forward(layer, [1.0], tape)
        with pytest.raises(ContractError):
            backward(tape, np.array(0.0))

    def test_empty_tape_rejected(self):
        with pytest.raises(ContractError):
            backward(GradientTape(), np.array(0.0))


def _random_sample(rng, input_len=110):
    x = rng.uniform(0.0, 100.0, size=(1, input_len))
    x[0, -2] = rng.uniform(23.0, 30.3)
    x[0, -1] = rng.uniform(69.4, 78.4)
    y = rng.uniform(0.0, 100.0, size=1)
    return x, y


class TestGradientsAgainstFiniteDifferences:
    def test_small_composite_net_full_coverage(self):
        spec = models.ModelSpec(kind="dwmrpm", input_len=12, deep_widths=(7, 5, 3),
                                conv_filters=4, kernel_len=3, seed=13)
        net = models.build_model(spec)
        rng = np.random.default_rng(14)
        x, y = _random_sample(rng, input_len=12)

        tape = GradientTape()
        pred = net.forward(x, tape=tape, mode=DropoutMode.EVAL)
        loss = optim.mse_loss(pred, y, tape)
        grads = backward(tape, loss)

        def loss_fn():
            return optim.mse_loss(net.forward(x), y)

        for param in net.parameters():
            for index in np.ndindex(param.value.shape):
                fd = oracles.fd_gradient(loss_fn, param, index)
                assert oracles.gradients_close(fd, grads[param][index]), (
                    f"{param.name}{index}: fd={fd} bp={grads[param][index]}"
                )

    @pytest.mark.parametrize("kind", ["dwmrpm", "mlp", "cnn"])
    def test_default_models_random_subset(self, kind):
        spec = models.ModelSpec(kind=kind, seed=15)
        net = models.build_model(spec)
        rng = np.random.default_rng(16)
        x, y = _random_sample(rng)

        tape = GradientTape()
        pred = net.forward(x, tape=tape, mode=DropoutMode.EVAL)
        loss = optim.mse_loss(pred, y, tape)
        grads = backward(tape, loss)

        def loss_fn():
            return optim.mse_loss(net.forward(x), y)

        params = net.parameters()
        for _ in range(300):
            param = params[int(rng.integers(len(params)))]
            index = np.unravel_index(int(rng.integers(param.value.size)),
                                     param.value.shape)
            fd = oracles.fd_gradient(loss_fn, param, index)
            assert oracles.gradients_close(fd, grads[param][index]), (
                f"{kind} {param.name}{index}: fd={fd} bp={grads[param][index]}"
            )

    def test_dropout_train_mode_grad_uses_same_mask(self):
        spec = models.ModelSpec(kind="dwmrpm", input_len=12, deep_widths=(6, 4, 3),
                                conv_filters=3, kernel_len=3, seed=17)
        net = models.build_model(spec)
        rng = np.random.default_rng(18)
        x, y = _random_sample(rng, input_len=12)

        tape = GradientTape()
        pred = net.forward(x, tape=tape, mode=DropoutMode.TRAIN,
                           rng=np.random.default_rng(19))
        loss = optim.mse_loss(pred, y, tape)
        grads = backward(tape, loss)

        # same dropout seed => same masks => finite differences still match
        def loss_fn():
            return optim.mse_loss(
                net.forward(x, mode=DropoutMode.TRAIN,
                            rng=np.random.default_rng(19)), y)

        params = net.parameters()
        for _ in range(60):
            param = params[int(rng.integers(len(params)))]
            index = np.unravel_index(int(rng.integers(param.value.size)),
                                     param.value.shape)
            fd = oracles.fd_gradient(loss_fn, param, index)
            assert oracles.gradients_close(fd, grads[param][index])


class TestDeterminism:
    def test_forward_backward_bit_identical(self):
        spec = models.ModelSpec(kind="dwmrpm", seed=20)
        rng = np.random.default_rng(21)
        x, y = _random_sample(rng)

        results = []
        for _ in range(2):
            net = models.build_model(spec)
            tape = GradientTape()
            pred = net.forward(x, tape=tape, mode=DropoutMode.TRAIN,
                               rng=np.random.default_rng(22))
            loss = optim.mse_loss(pred, y, tape)
            grads = backward(tape, loss)
            results.append((pred.copy(), float(loss),
                            {p.name: g.copy() for p, g in grads.items()}))

        (pred_a, loss_a, grads_a), (pred_b, loss_b, grads_b) = results
        assert np.array_equal(pred_a, pred_b)
        assert loss_a == loss_b
        assert grads_a.keys() == grads_b.keys()
        for name in grads_a:
            assert np.array_equal(grads_a[name], grads_b[name]), name

    def test_outputs_stay_finite(self):
        spec = models.ModelSpec(kind="cnn", seed=23)
        net = models.build_model(spec)
        x, y = _random_sample(np.random.default_rng(24))
        tape = GradientTape()
        pred = net.forward(x, tape=tape)
        loss = optim.mse_loss(pred, y, tape)
        grads = backward(tape, loss)
        assert np.isfinite(pred).all() and np.isfinite(loss)
        for g in grads.values():
            assert np.isfinite(g).all()

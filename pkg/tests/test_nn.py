import numpy as np
import pytest

from src.core.exceptions import DegenerateBatchException, LayerStateException, ShapeException, WeightFormatException
from src.nn.layers import BatchNorm1d, Conv1d, Linear, ReLU, Reshape, Sequential, count_parameters
from src.nn.loss import MSELoss, mse_per_dimension
from src.nn.optim import Adam, AdamState, adam_step
from src.nn.serialization import load_weights, read_weights, save_weights

from .conftest import away_from_zero, layer_gradient_errors, numeric_gradient, relative_error

GRADIENT_TOLERANCE = 1e-6
TRIALS = range(25)


def _naive_conv(x, weight, bias, k):
    n, cin, length = x.shape
    out = np.zeros((n, weight.shape[0], length // k))
    for b in range(n):
        for o in range(weight.shape[0]):
            for t in range(length // k):
                out[b, o, t] = np.sum(weight[o] * x[b, :, t * k:(t + 1) * k]) + bias[o]
    return out


class TestConv1d:
    def test_matches_direct_loop(self, rng):
        conv = Conv1d(3, 5, 4, 4, rng=rng)
        x = rng.standard_normal((2, 3, 16))
        expected = _naive_conv(x, conv.params["weight"], conv.params["bias"], 4)
        np.testing.assert_allclose(conv.forward(x), expected, rtol=1e-12, atol=1e-12)

    def test_output_length_is_input_over_kernel(self, rng):
        conv = Conv1d(1, 10, rng=rng)
        assert conv.forward(rng.standard_normal((7, 1, 4096))).shape == (7, 10, 1024)

    def test_rejects_indivisible_length_and_wrong_channels(self, rng):
        conv = Conv1d(2, 3, rng=rng)
        with pytest.raises(ShapeException):
            conv.forward(rng.standard_normal((1, 2, 10)))
        with pytest.raises(ShapeException):
            conv.forward(rng.standard_normal((1, 3, 8)))

    def test_stride_must_equal_kernel(self):
        with pytest.raises(ShapeException):
            Conv1d(1, 1, kernel_size=4, stride=2)

    @pytest.mark.parametrize("seed", TRIALS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        cin, cout = rng.integers(1, 4, size=2)
        conv = Conv1d(int(cin), int(cout), rng=rng)
        x = rng.standard_normal((int(rng.integers(1, 4)), int(cin), 4 * int(rng.integers(1, 5))))
        errors = layer_gradient_errors(conv, x, rng)
        assert max(errors.values()) <= GRADIENT_TOLERANCE, errors


class TestBatchNorm1d:
    def test_training_output_is_normalised(self, rng):
        bn = BatchNorm1d(4)
        out = bn.forward(rng.standard_normal((8, 4, 16)) * 3.0 + 2.0)
        np.testing.assert_allclose(out.mean(axis=(0, 2)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=(0, 2)), 1.0, rtol=1e-4)

    def test_running_statistics_use_unbiased_variance(self, rng):
        bn = BatchNorm1d(2, momentum=0.1)
        x = rng.standard_normal((3, 2, 5))
        bn.forward(x)
        np.testing.assert_allclose(bn.buffers["running_mean"], 0.1 * x.mean(axis=(0, 2)))
        np.testing.assert_allclose(bn.buffers["running_var"], 0.9 + 0.1 * x.var(axis=(0, 2), ddof=1))

    def test_eval_uses_running_statistics_without_updating_them(self, rng):
        bn = BatchNorm1d(2)
        bn.buffers["running_mean"] = np.array([1.0, -1.0])
        bn.buffers["running_var"] = np.array([4.0, 0.25])
        bn.eval()
        x = rng.standard_normal((2, 2, 3))
        out = bn.forward(x)
        expected = (x - np.array([1.0, -1.0])[None, :, None]) / np.sqrt(np.array([4.0, 0.25]) + bn.eps)[None, :, None]
        np.testing.assert_allclose(out, expected)
        np.testing.assert_array_equal(bn.buffers["running_mean"], [1.0, -1.0])

    def test_constant_channel_normalises_to_zeros(self, rng):
        x = rng.standard_normal((4, 2, 8))
        x[:, 0, :] = 3.7
        out = BatchNorm1d(2).forward(x)
        np.testing.assert_allclose(out[:, 0, :], 0.0, atol=1e-6)
        assert np.all(np.isfinite(out))

    def test_single_value_per_channel_is_degenerate(self, rng):
        with pytest.raises(DegenerateBatchException):
            BatchNorm1d(3).forward(rng.standard_normal((1, 3, 1)))

    @pytest.mark.parametrize("seed", TRIALS)
    def test_gradients(self, seed):
        rng = np.random.default_rng(seed)
        channels = int(rng.integers(1, 4))
        bn = BatchNorm1d(channels)
        bn.params["gamma"] = rng.uniform(0.5, 1.5, channels)
        bn.params["beta"] = rng.standard_normal(channels)
        x = rng.standard_normal((int(rng.integers(2, 4)), channels, int(rng.integers(1, 5))))
        errors = layer_gradient_errors(bn, x, rng)
        assert max(errors.values()) <= GRADIENT_TOLERANCE, errors


class TestLinearAndReLU:
    @pytest.mark.parametrize("seed", TRIALS)
    def test_linear_gradients(self, seed):
        rng = np.random.default_rng(seed)
        fin, fout = (int(v) for v in rng.integers(1, 6, size=2))
        layer = Linear(fin, fout, rng=rng)
        errors = layer_gradient_errors(layer, rng.standard_normal((int(rng.integers(1, 5)), fin)), rng)
        assert max(errors.values()) <= GRADIENT_TOLERANCE, errors

    @pytest.mark.parametrize("seed", TRIALS)
    def test_relu_gradients(self, seed):
        rng = np.random.default_rng(seed)
        x = away_from_zero(rng, (int(rng.integers(1, 4)), 3, 4))
        errors = layer_gradient_errors(ReLU(), x, rng)
        assert errors["input"] <= GRADIENT_TOLERANCE

    def test_linear_batch_rows_match_single_rows(self, rng):
        layer = Linear(160, 40, rng=rng).eval()
        x = rng.standard_normal((5, 160))
        batched = layer.forward(x)
        for i in range(5):
            np.testing.assert_array_equal(batched[i], layer.forward(x[i:i + 1])[0])


class TestSequential:
    def _small_net(self, rng):
        return Sequential([
            Reshape(1, 64),
            Conv1d(1, 2, rng=rng), BatchNorm1d(2), ReLU(),
            Conv1d(2, 3, rng=rng), BatchNorm1d(3), ReLU(),
            Reshape(12),
            Linear(12, 5, rng=rng),
            Linear(5, 3, rng=rng),
        ])

    @pytest.mark.parametrize("seed", range(5))
    def test_end_to_end_gradients(self, seed):
        rng = np.random.default_rng(seed)
        net = self._small_net(rng)
        x = rng.standard_normal((4, 64))
        target = rng.standard_normal((4, 3))
        loss_fn = MSELoss()

        net.train()
        net.zero_grad()
        loss_fn(net.forward(x), target)
        net.backward(loss_fn.backward())
        analytic = {k: v.copy() for k, v in net.gradients().items()}

        def loss():
            return loss_fn(net.forward(x), target)[0]

        for key, value in net.parameters().items():
            numeric = numeric_gradient(loss, value)
            if key.endswith("conv1d.bias"):
                # a bias feeding BatchNorm is cancelled by the mean subtraction
                np.testing.assert_allclose(analytic[key], 0.0, atol=1e-10, err_msg=key)
                np.testing.assert_allclose(numeric, 0.0, atol=1e-6, err_msg=key)
            else:
                assert relative_error(analytic[key], numeric) <= GRADIENT_TOLERANCE, key

    def test_backward_before_forward_is_a_state_error(self, rng):
        for layer in (Conv1d(1, 1, rng=rng), BatchNorm1d(1), ReLU(), Linear(2, 2, rng=rng), Reshape(4)):
            with pytest.raises(LayerStateException):
                layer.backward(np.zeros((1, 1, 4)))

    def test_eval_forward_does_not_prime_backward(self, rng):
        layer = Linear(3, 2, rng=rng).eval()
        layer.forward(rng.standard_normal((2, 3)))
        with pytest.raises(LayerStateException):
            layer.backward(np.zeros((2, 2)))

    def test_state_dict_round_trip_restores_outputs(self, rng):
        net = self._small_net(rng)
        net.forward(rng.standard_normal((4, 64)))
        state = net.state_dict()
        x = rng.standard_normal((2, 64))
        before = net.eval().forward(x)

        other = self._small_net(np.random.default_rng(99))
        other.load_state_dict(state)
        np.testing.assert_array_equal(other.eval().forward(x), before)

    def test_count_parameters_excludes_running_statistics(self, rng):
        net = Sequential([Conv1d(1, 2, rng=rng), BatchNorm1d(2)])
        assert count_parameters(net) == 2 * 4 + 2 + 2 + 2


class TestLoss:
    def test_per_dimension_and_scalar(self):
        prediction = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 5.0]])
        target = np.array([[0.0, 2.0, 3.0], [2.0, 2.0, 3.0]])
        loss, per_dim = MSELoss()(prediction, target)
        np.testing.assert_allclose(per_dim, [1.0, 0.0, 2.0])
        assert loss == pytest.approx(3.0)

    def test_backward_matches_finite_differences(self, rng):
        prediction = rng.standard_normal((4, 3))
        target = rng.standard_normal((4, 3))
        loss_fn = MSELoss()
        loss_fn(prediction, target)
        numeric = numeric_gradient(lambda: loss_fn(prediction, target)[0], prediction)
        loss_fn(prediction, target)
        assert relative_error(loss_fn.backward(), numeric) <= GRADIENT_TOLERANCE

    def test_shape_mismatch(self):
        with pytest.raises(ShapeException):
            mse_per_dimension(np.zeros((2, 3)), np.zeros((3, 3)))


class TestAdam:
    def test_first_step_by_hand(self):
        theta = np.array([1.0, -2.0])
        grad = np.array([0.5, -4.0])
        state = AdamState(lr=0.1)
        adam_step({"w": theta}, {"w": grad}, state)

        m_hat = (0.1 * grad) / (1 - 0.9)
        v_hat = (0.001 * grad ** 2) / (1 - 0.999)
        expected = np.array([1.0, -2.0]) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
        np.testing.assert_allclose(theta, expected, rtol=1e-12)
        assert state.t == 1

    def test_second_step_uses_moment_history(self):
        theta = np.array([0.0])
        state = AdamState(lr=0.01)
        adam_step({"w": theta}, {"w": np.array([1.0])}, state)
        adam_step({"w": theta}, {"w": np.array([3.0])}, state)

        m = 0.9 * 0.1 + 0.1 * 3.0
        v = 0.999 * 0.001 + 0.001 * 9.0
        step1 = 0.01 * 1.0 / (1.0 + 1e-8)
        step2 = 0.01 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
        np.testing.assert_allclose(theta, [-step1 - step2], rtol=1e-12)

    def test_zero_gradient_leaves_parameters_unchanged(self):
        theta = np.array([0.7, -1.3, 2.0])
        state = AdamState()
        for _ in range(20):
            adam_step({"w": theta}, {"w": np.zeros(3)}, state)
        np.testing.assert_array_equal(theta, [0.7, -1.3, 2.0])

    def test_scalar_square_decreases_every_step(self):
        theta = np.array([1.0])
        state = AdamState()
        values = [float(theta[0] ** 2)]
        for _ in range(10):
            adam_step({"w": theta}, {"w": 2.0 * theta}, state)
            values.append(float(theta[0] ** 2))
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_minimises_a_quadratic(self, rng):
        layer = Linear(3, 1, rng=rng)
        net = Sequential([layer])
        optimizer = Adam(net, lr=0.05)
        x = rng.standard_normal((64, 3))
        y = x @ np.array([[1.0], [-2.0], [0.5]]) + 0.3
        loss_fn = MSELoss()
        for _ in range(800):
            optimizer.zero_grad()
            loss_fn(net.forward(x), y)
            net.backward(loss_fn.backward())
            optimizer.step()
        np.testing.assert_allclose(layer.params["weight"], [[1.0, -2.0, 0.5]], atol=1e-2)
        np.testing.assert_allclose(layer.params["bias"], [0.3], atol=1e-2)


class TestSerialization:
    def test_save_and_load_reproduce_outputs(self, tmp_path, rng):
        net = Sequential([Reshape(1, 16), Conv1d(1, 2, rng=rng), BatchNorm1d(2), ReLU(), Reshape(8), Linear(8, 3, rng=rng)])
        net.forward(rng.standard_normal((3, 16)))
        path = save_weights(net, tmp_path / "net.rgwt")

        fresh = Sequential([Reshape(1, 16), Conv1d(1, 2, rng=np.random.default_rng(5)), BatchNorm1d(2), ReLU(),
                            Reshape(8), Linear(8, 3, rng=np.random.default_rng(6))])
        load_weights(fresh, path)
        x = rng.standard_normal((2, 16))
        np.testing.assert_array_equal(fresh.eval().forward(x), net.eval().forward(x))

    def test_rejects_foreign_and_truncated_files(self, tmp_path, rng):
        bogus = tmp_path / "bogus.rgwt"
        bogus.write_bytes(b"NOPE" + b"\x00" * 10)
        with pytest.raises(WeightFormatException):
            read_weights(bogus)

        net = Sequential([Linear(4, 2, rng=rng)])
        good = save_weights(net, tmp_path / "good.rgwt")
        truncated = tmp_path / "short.rgwt"
        truncated.write_bytes(good.read_bytes()[:-3])
        with pytest.raises(WeightFormatException):
            read_weights(truncated)

    def test_rejects_mismatched_architecture(self, tmp_path, rng):
        path = save_weights(Sequential([Linear(4, 2, rng=rng)]), tmp_path / "small.rgwt")
        with pytest.raises(WeightFormatException):
            load_weights(Sequential([Linear(4, 3, rng=rng)]), path)

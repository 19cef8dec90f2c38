import math

import numpy as np
import pytest

from polartraj import autodiff as ad
from polartraj.autodiff import NumericError, ShapeError, Tensor
from polartraj.gradcheck import gradient_check


def leaf(rng, shape, low=-2.0, high=2.0):
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def check_op(build_loss, params, tol=1e-6):
    err = gradient_check(build_loss, params)
    assert err < tol, f"gradient mismatch {err:.3e}"


class TestForwardExamples:
    def test_softmax_symmetry(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0]), axis=0)
        assert np.allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_gelu_zero(self):
        assert ad.gelu(Tensor(0.0)).item() == 0.0

    def test_layernorm_constant_input_maps_to_bias(self):
        gain = Tensor(np.ones(3))
        bias = Tensor(np.zeros(3))
        out = ad.layer_norm(Tensor([1.0, 1.0, 1.0]), gain, bias)
        assert np.allclose(out.data, 0.0, atol=0.0)
        bias2 = Tensor([5.0, 6.0, 7.0])
        out2 = ad.layer_norm(Tensor([2.0, 2.0, 2.0]), gain, bias2)
        assert np.allclose(out2.data, [5.0, 6.0, 7.0], atol=0.0)

    def test_softmax_sums_to_one_and_positive(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(0, 5, size=(4, 7)))
        out = ad.softmax(x, axis=-1)
        assert np.abs(out.data.sum(axis=-1) - 1.0).max() < 1e-12
        assert (out.data > 0).all()


class TestBackwardBasics:
    def test_square_sum(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        loss = (p * p).sum()
        loss.backward()
        assert np.allclose(p.grad, [2.0, 4.0], atol=0.0)

    def test_constant_loss_zero_grads(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        loss = Tensor(3.0)
        loss.backward(parameters=[p])
        assert np.allclose(p.grad, 0.0, atol=0.0)

    def test_unreachable_parameter_gets_zeros(self):
        p = Tensor([1.0], requires_grad=True)
        q = Tensor([[1.0, 2.0]], requires_grad=True)
        loss = (p * p).sum()
        loss.backward(parameters=[p, q])
        assert q.grad.shape == (1, 2)
        assert np.allclose(q.grad, 0.0, atol=0.0)

    def test_non_scalar_loss_rejected(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            (p * p).backward()

    def test_grad_accumulates_over_fanout(self):
        p = Tensor(2.0, requires_grad=True)
        loss = p * p + p * 3.0
        loss.backward()
        assert p.grad == pytest.approx(2 * 2.0 + 3.0)


class TestErrors:
    def test_matmul_shape_error_names_shapes(self):
        a, b = Tensor(np.ones((3, 4))), Tensor(np.ones((5, 6)))
        with pytest.raises(ShapeError, match=r"matmul.*\(3, 4\).*\(5, 6\)"):
            ad.matmul(a, b)

    def test_concat_shape_error(self):
        with pytest.raises(ShapeError, match="concat"):
            ad.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))], axis=0)

    def test_linear_shape_error(self):
        with pytest.raises(ShapeError, match="linear"):
            ad.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_divide_by_zero_is_numeric_error(self):
        with pytest.raises(NumericError, match="div"):
            ad.div(Tensor([1.0]), Tensor([0.0]))

    def test_exp_overflow_is_numeric_error(self):
        with pytest.raises(NumericError, match="exp"):
            ad.texp(Tensor([1000.0]))

    def test_log_of_negative_is_numeric_error(self):
        with pytest.raises(NumericError, match="log"):
            ad.tlog(Tensor([-1.0]))

    def test_nan_in_constructor_rejected(self):
        with pytest.raises(NumericError):
            Tensor([np.nan])


class TestMaskedOps:
    def test_masked_softmax_zeroes_invalid(self):
        x = Tensor(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]))
        mask = np.array([[True, False, True], [False, False, False]])
        out = ad.masked_softmax(x, mask, axis=-1)
        assert out.data[0, 1] == 0.0
        assert out.data[0].sum() == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(out.data[1], 0.0, atol=0.0)

    def test_masked_max_takes_valid_max(self):
        x = Tensor(np.array([[1.0, 9.0, 3.0], [5.0, 6.0, 7.0]]))
        mask = np.array([[True, False, True], [False, False, False]])
        out = ad.masked_max(x, mask, axis=-1)
        assert out.data[0] == 3.0
        assert out.data[1] == 0.0

    def test_masked_max_gradient_routes_to_argmax(self):
        x = Tensor(np.array([[1.0, 9.0, 3.0]]), requires_grad=True)
        mask = np.array([[True, False, True]])
        out = ad.masked_max(x, mask, axis=-1)
        out.sum().backward()
        assert np.allclose(x.grad, [[0.0, 0.0, 1.0]], atol=0.0)


class TestGradients:
    """Central finite differences vs analytic gradients, per primitive."""

    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def mix(self, out):
        # deterministic weighting so every output entry matters
        w = Tensor(np.linspace(0.5, 1.5, out.size).reshape(out.shape))
        return (out * w).sum()

    def test_elementwise_binary(self):
        rng = self.rng
        a = leaf(rng, (3, 4))
        b = leaf(rng, (3, 4), low=0.5, high=2.0)
        check_op(lambda: self.mix(a + b * 2.0 - b), {"a": a, "b": b})
        check_op(lambda: self.mix(a * b), {"a": a, "b": b})
        check_op(lambda: self.mix(a / b), {"a": a, "b": b})
        check_op(lambda: self.mix(b ** 1.7), {"b": b})

    def test_broadcasting_binary(self):
        rng = self.rng
        a = leaf(rng, (3, 4))
        b = leaf(rng, (4,), low=0.5, high=2.0)
        check_op(lambda: self.mix(a * b), {"a": a, "b": b})
        check_op(lambda: self.mix(a / b), {"a": a, "b": b})
        c = leaf(rng, (3, 1))
        check_op(lambda: self.mix(a + c), {"a": a, "c": c})

    def test_unary(self):
        rng = self.rng
        a = leaf(rng, (2, 5))
        pos = leaf(rng, (2, 5), low=0.3, high=3.0)
        check_op(lambda: self.mix(ad.texp(a)), {"a": a})
        check_op(lambda: self.mix(ad.tlog(pos)), {"pos": pos})
        check_op(lambda: self.mix(ad.tsqrt(pos)), {"pos": pos})
        check_op(lambda: self.mix(ad.tsin(a) + ad.tcos(a)), {"a": a})
        check_op(lambda: self.mix(ad.ttanh(a)), {"a": a})
        check_op(lambda: self.mix(ad.sigmoid(a)), {"a": a})
        check_op(lambda: self.mix(ad.softplus(a)), {"a": a})
        check_op(lambda: self.mix(ad.gelu(a)), {"a": a})
        check_op(lambda: self.mix(-a), {"a": a})

    def test_relu_away_from_kink(self):
        x = Tensor(np.array([[-1.5, -0.2, 0.3, 2.0]]), requires_grad=True)
        check_op(lambda: self.mix(ad.relu(x)), {"x": x})

    def test_smooth_l1_away_from_transition(self):
        x = Tensor(np.array([[-2.5, -0.4, 0.3, 1.8, 0.9]]), requires_grad=True)
        check_op(lambda: self.mix(ad.smooth_l1(x)), {"x": x})

    def test_wrap_angle_identity_gradient(self):
        x = Tensor(np.array([0.3, 4.0, -7.0, 2.9]), requires_grad=True)
        check_op(lambda: self.mix(ad.wrap_angle(x)), {"x": x})

    def test_atan2(self):
        rng = self.rng
        y = leaf(rng, (6,), low=0.5, high=2.0)
        x = leaf(rng, (6,), low=0.5, high=2.0)
        check_op(lambda: self.mix(ad.atan2(y, x)), {"y": y, "x": x})

    def test_matmul_2d_and_batched(self):
        rng = self.rng
        a = leaf(rng, (3, 4))
        b = leaf(rng, (4, 2))
        check_op(lambda: self.mix(ad.matmul(a, b)), {"a": a, "b": b})
        c = leaf(rng, (5, 3, 4))
        d = leaf(rng, (5, 4, 2))
        check_op(lambda: self.mix(ad.matmul(c, d)), {"c": c, "d": d})
        # broadcast over the stack dimension
        e = leaf(rng, (1, 4, 2))
        check_op(lambda: self.mix(ad.matmul(c, e)), {"c": c, "e": e})

    def test_linear(self):
        rng = self.rng
        x = leaf(rng, (5, 2, 3))
        w = leaf(rng, (3, 4))
        b = leaf(rng, (4,))
        check_op(lambda: self.mix(ad.linear(x, w, b)), {"x": x, "w": w, "b": b})

    def test_layer_norm(self):
        rng = self.rng
        x = leaf(rng, (4, 6))
        gain = leaf(rng, (6,), low=0.5, high=1.5)
        bias = leaf(rng, (6,))
        check_op(
            lambda: self.mix(ad.layer_norm(x, gain, bias)),
            {"x": x, "gain": gain, "bias": bias},
        )

    def test_softmax_and_masked_softmax(self):
        rng = self.rng
        x = leaf(rng, (3, 5))
        check_op(lambda: self.mix(ad.softmax(x, axis=-1)), {"x": x})
        mask = rng.random((3, 5)) > 0.3
        mask[0] = [True, False, True, False, True]
        check_op(lambda: self.mix(ad.masked_softmax(x, mask, axis=-1)), {"x": x})

    def test_masked_max(self):
        rng = self.rng
        x = leaf(rng, (4, 6))
        mask = rng.random((4, 6)) > 0.3
        mask[0, :] = True
        check_op(lambda: self.mix(ad.masked_max(x, mask, axis=1)), {"x": x})

    def test_reductions(self):
        rng = self.rng
        x = leaf(rng, (3, 4, 5))
        check_op(lambda: self.mix(x.sum(axis=1)), {"x": x})
        check_op(lambda: self.mix(x.mean(axis=(0, 2))), {"x": x})
        check_op(lambda: x.mean(), {"x": x})
        check_op(lambda: self.mix(x.sum(axis=2, keepdims=True)), {"x": x})

    def test_shape_ops(self):
        rng = self.rng
        x = leaf(rng, (3, 4))
        check_op(lambda: self.mix(x.reshape(2, 6)), {"x": x})
        check_op(lambda: self.mix(x.transpose(1, 0)), {"x": x})
        check_op(lambda: self.mix(ad.broadcast_to(x.reshape(3, 1, 4), (3, 5, 4))), {"x": x})
        check_op(lambda: self.mix(x[1:, 2]), {"x": x})
        check_op(lambda: self.mix(ad.concat([x, x * 2.0], axis=1)), {"x": x})
        check_op(lambda: self.mix(ad.stack([x[0], x[2]], axis=0)), {"x": x})

    def test_smooth_l1_value_convention(self):
        # quadratic branch: 0.5 * d^2 at |d| < 1
        out = ad.smooth_l1(Tensor([0.5]))
        assert out.data[0] == pytest.approx(0.125, abs=0.0)
        # linear branch: |d| - 0.5
        out2 = ad.smooth_l1(Tensor([3.0]))
        assert out2.data[0] == pytest.approx(2.5, abs=0.0)


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        out = ad.dropout(x, 0.5, None, training=False)
        assert out is x

    def test_train_mode_scales(self):
        rng = np.random.default_rng(0)
        x = Tensor(np.ones((2000,)), requires_grad=True)
        out = ad.dropout(x, 0.25, rng, training=True)
        kept = out.data != 0
        assert np.allclose(out.data[kept], 1 / 0.75)
        assert abs(kept.mean() - 0.75) < 0.05
        out.sum().backward()
        assert np.allclose(x.grad[~kept], 0.0, atol=0.0)

    def test_missing_rng_rejected(self):
        with pytest.raises(ValueError, match="rng"):
            ad.dropout(Tensor([1.0]), 0.5, None, training=True)


class TestDeterminism:
    def test_replay_bit_identical(self):
        def run():
            rng = np.random.default_rng(123)
            x = Tensor(rng.normal(size=(8, 8)), requires_grad=True)
            w = Tensor(rng.normal(size=(8, 8)), requires_grad=True)
            y = ad.gelu(ad.matmul(x, w))
            loss = ad.softmax(y, axis=-1).mean()
            loss.backward()
            return loss.data.copy(), x.grad.copy(), w.grad.copy()

        l1, gx1, gw1 = run()
        l2, gx2, gw2 = run()
        assert np.array_equal(l1, l2)
        assert np.array_equal(gx1, gx2)
        assert np.array_equal(gw1, gw2)

    def test_deep_graph_no_recursion_limit(self):
        x = Tensor(1.0, requires_grad=True)
        y = x
        for _ in range(5000):
            y = y * 1.0001
        y.backward()
        assert x.grad == pytest.approx(1.0001 ** 5000)

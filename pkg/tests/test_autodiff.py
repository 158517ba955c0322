"""Tensor engine: op semantics, backward contracts, finite-difference oracles."""

import math

import numpy as np
import pytest

import labelattn.autodiff as ad
from labelattn.autodiff import (Tensor, backward, bce_loss, concat, constant, detach,
                                finite_diff_grad, gradients, matmul, relu, sigmoid,
                                softmax, sum_all, tensor_new)


def fd_close(ad_grad, fd_grad, rel=1e-4, floor=1e-6):
    diff = np.abs(np.asarray(ad_grad) - np.asarray(fd_grad))
    assert np.all(diff <= np.maximum(floor, rel * np.abs(fd_grad))), (ad_grad, fd_grad)


class TestTensorNew:
    def test_row_major_2x2(self):
        t = tensor_new([2, 2], [1, 2, 3, 4])
        assert t.data[0, 1] == 2 and t.data[1, 0] == 3

    def test_zero_vector_without_grad(self):
        t = tensor_new([3], [0, 0, 0])
        assert t.grad is None and not t.requires_grad
        assert np.array_equal(t.data, np.zeros(3))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            tensor_new([2], [1, 2, 3])

    def test_rejects_empty_shape_and_nonfinite(self):
        with pytest.raises(ValueError):
            tensor_new([], [])
        with pytest.raises(ValueError, match="finite"):
            tensor_new([1], [np.inf])


class TestMatmul:
    def test_identity(self):
        a = tensor_new([2, 2], [1.5, -2, 0.25, 4])
        out = matmul(a, constant(np.eye(2)))
        assert np.array_equal(out.data, a.data)

    def test_scalar_product(self):
        out = matmul(tensor_new([1, 1], [2]), tensor_new([1, 1], [3]))
        assert out.data[0, 0] == 6

    def test_inner_dim_mismatch(self):
        with pytest.raises(ValueError, match="inner-dimension"):
            matmul(tensor_new([2, 3], range(6)), tensor_new([2, 2], range(4)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        b = constant(rng.normal(size=(4, 3)))
        a = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
        (g,) = gradients(sum_all(matmul(a, b)), [a])
        fd = finite_diff_grad(lambda t: sum_all(matmul(t, b)), a)
        fd_close(g, fd.data)


class TestElementwise:
    def test_add(self):
        out = ad.add(tensor_new([2], [1, 2]), tensor_new([2], [3, 4]))
        assert np.array_equal(out.data, [4, 6])

    def test_mul_by_zero_annihilates_value_and_gradient(self):
        x = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        out = ad.mul(x, constant(np.zeros(2)))
        assert np.array_equal(out.data, np.zeros(2))
        (g,) = gradients(sum_all(out), [x])
        assert np.array_equal(g, np.zeros(2))

    def test_product_gradient_is_other_factor(self):
        rng = np.random.default_rng(4)
        b = rng.normal(size=5)
        a = Tensor(rng.normal(size=5), requires_grad=True)
        (g,) = gradients(sum_all(ad.mul(a, constant(b))), [a])
        assert np.allclose(g, b)
        fd = finite_diff_grad(lambda t: sum_all(ad.mul(t, constant(b))), a)
        fd_close(g, fd.data)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            ad.add(tensor_new([2], [1, 2]), tensor_new([3], [1, 2, 3]))

    def test_scalar_ops(self):
        x = tensor_new([2], [1, 2])
        assert np.array_equal(ad.scalar_mul(x, 3).data, [3, 6])
        assert np.array_equal(ad.scalar_add(x, -1).data, [0, 1])


class TestSigmoid:
    def test_symmetry_point(self):
        assert sigmoid(tensor_new([1], [0])).data[0] == 0.5

    def test_saturation(self):
        assert abs(sigmoid(tensor_new([1], [50])).data[0] - 1.0) < 1e-9
        # large negative input must not overflow
        assert sigmoid(tensor_new([1], [-1000])).data[0] == pytest.approx(0.0, abs=1e-300)

    def test_derivative_at_one(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        (g,) = gradients(sum_all(sigmoid(x)), [x])
        fd = finite_diff_grad(lambda t: sum_all(sigmoid(t)), x)
        fd_close(g, fd.data)


class TestRelu:
    def test_values(self):
        assert np.array_equal(relu(tensor_new([3], [-1, 0, 2])).data, [0, 0, 2])

    def test_positive_identity(self):
        x = tensor_new([3], [0.5, 1, 7])
        assert np.array_equal(relu(x).data, x.data)

    def test_gradient_mask(self):
        x = Tensor(np.array([-1.5, -0.2, 0.3, 2.0]), requires_grad=True)
        (g,) = gradients(sum_all(relu(x)), [x])
        assert np.array_equal(g, [0, 0, 1, 1])
        fd = finite_diff_grad(lambda t: sum_all(relu(t)), x)
        fd_close(g, fd.data)


class TestSoftmax:
    def test_uniform_for_equal_logits(self):
        for m in (2, 5, 9):
            out = softmax(constant(np.full(m, 3.7)))
            assert np.allclose(out.data, 1.0 / m, atol=1e-15)

    def test_stability(self):
        out = softmax(constant(np.array([1000.0, 0.0])))
        assert np.isfinite(out.data).all()
        assert out.data[0] == pytest.approx(1.0, abs=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        out = softmax(constant(rng.normal(size=(40, 7)) * 10))
        assert np.all(out.data >= 0)
        assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        wgt = constant(rng.normal(size=6))
        z = Tensor(rng.normal(size=6), requires_grad=True)
        (g,) = gradients(sum_all(ad.mul(softmax(z), wgt)), [z])
        fd = finite_diff_grad(lambda t: sum_all(ad.mul(softmax(t), wgt)), z)
        fd_close(g, fd.data)


class TestConcat:
    def test_vectors(self):
        out = concat([tensor_new([2], [1, 2]), tensor_new([1], [3])], axis=0)
        assert np.array_equal(out.data, [1, 2, 3])

    def test_single_part_identity(self):
        x = tensor_new([2, 2], [1, 2, 3, 4])
        assert np.array_equal(concat([x], axis=1).data, x.data)

    def test_gradient_routing(self):
        rng = np.random.default_rng(7)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)
        wgt = constant(rng.normal(size=(2, 5)))
        loss = sum_all(ad.mul(concat([a, b], axis=1), wgt))
        ga, gb = gradients(loss, [a, b])
        fd_a = finite_diff_grad(lambda t: sum_all(ad.mul(concat([t, b], axis=1), wgt)), a)
        fd_b = finite_diff_grad(lambda t: sum_all(ad.mul(concat([a, t], axis=1), wgt)), b)
        fd_close(ga, fd_a.data)
        fd_close(gb, fd_b.data)

    def test_inconsistent_shapes(self):
        with pytest.raises(ValueError, match="concat"):
            concat([tensor_new([2, 2], range(4)), tensor_new([2, 3], range(6))], axis=0)


class TestBceLoss:
    def test_half_predictions_give_ln2(self):
        for n in (1, 4, 9):
            pred = constant(np.full(n, 0.5))
            target = constant((np.arange(n) % 2).astype(float))
            assert bce_loss(pred, target).item() == pytest.approx(math.log(2), abs=1e-15)

    def test_known_value(self):
        # independent evaluation: -(1/2) * (ln 0.9 + ln 0.8)
        expected = -0.5 * (math.log(0.9) + math.log(0.8))
        got = bce_loss(constant([0.9, 0.2]), constant([1.0, 0.0])).item()
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.164252033486018, abs=1e-12)

    def test_target_gradient_formula(self):
        rng = np.random.default_rng(8)
        p = rng.uniform(0.1, 0.9, size=6)
        y = Tensor(rng.uniform(0, 1, size=6), requires_grad=True)
        (g,) = gradients(bce_loss(constant(p), y), [y])
        assert np.allclose(g, -(np.log(p) - np.log(1 - p)) / 6, atol=1e-12)
        fd = finite_diff_grad(lambda t: bce_loss(constant(p), t), y)
        fd_close(g, fd.data)

    def test_nonnegative_and_clamped(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            p = constant(rng.uniform(0, 1, size=8))
            y = constant(rng.integers(0, 2, size=8).astype(float))
            assert bce_loss(p, y).item() >= 0.0
        # exact 0/1 predictions hit the clamp instead of log(0)
        assert np.isfinite(bce_loss(constant([0.0, 1.0]), constant([1.0, 0.0])).item())

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            bce_loss(constant([0.5]), constant([0.5, 0.5]))


class TestBackward:
    def test_linear(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        backward(ad.scalar_mul(x, 2.0))
        assert np.array_equal(x.grad, [2.0])

    def test_accumulation_doubles(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = ad.scalar_mul(x, 2.0)
        backward(y)
        first = x.grad.copy()
        backward(y)
        assert np.array_equal(x.grad, 2 * first)

    def test_rejects_non_scalar(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(ad.scalar_mul(x, 2.0))

    def test_composite_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        x = constant(rng.normal(size=(5, 3)))
        y = constant(rng.integers(0, 2, size=(5, 2)).astype(float))
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=2), requires_grad=True)

        def loss_of(wt, bt):
            return bce_loss(sigmoid(ad.add_bias(matmul(x, wt), bt)), y)

        backward(loss_of(w, b))
        fd_w = finite_diff_grad(lambda t: loss_of(t, b), w)
        fd_b = finite_diff_grad(lambda t: loss_of(w, t), b)
        fd_close(w.grad, fd_w.data)
        fd_close(b.grad, fd_b.data)

    def test_shared_input_accumulates_both_paths(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        backward(sum_all(ad.mul(x, x)))  # d(x^2)/dx = 2x
        assert np.allclose(x.grad, [4.0])


class TestDetach:
    def test_severed_path_gets_zero_grad(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        inner = ad.scalar_mul(x, 3.0)
        out = sum_all(ad.mul(detach(inner), constant(np.ones(2))))
        (g,) = gradients(out, [x])
        assert np.array_equal(g, np.zeros(2))
        backward(out)
        assert x.grad is None

    def test_values_preserved_exactly(self):
        x = Tensor(np.array([0.1, -0.7, 3.3]), requires_grad=True)
        d = detach(x)
        assert np.array_equal(d.data, x.data)
        assert not d.requires_grad and d.node is None


class TestFiniteDiff:
    def test_quadratic(self):
        x = Tensor(np.array([1.0, 2.0]))
        fd = finite_diff_grad(lambda t: sum_all(ad.mul(t, t)), x)
        assert np.allclose(fd.data, [2.0, 4.0], atol=1e-6)

    def test_constant_function(self):
        fd = finite_diff_grad(lambda t: 4.2, Tensor(np.array([1.0, 2.0, 3.0])))
        assert np.array_equal(fd.data, np.zeros(3))

    def test_three_layer_network_self_consistency(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            r = np.random.default_rng([11, trial])
            x = constant(r.normal(size=(3, 4)))
            w1 = Tensor(r.normal(size=(4, 6)), requires_grad=True)
            w2 = constant(r.normal(size=(6, 5)))
            w3 = constant(r.normal(size=(5, 2)))
            y = constant(r.integers(0, 2, size=(3, 2)).astype(float))

            def loss_of(t):
                h1 = relu(matmul(x, t))
                h2 = relu(matmul(h1, w2))
                return bce_loss(sigmoid(matmul(h2, w3)), y)

            (g,) = gradients(loss_of(w1), [w1])
            fd = finite_diff_grad(loss_of, w1)
            fd_close(g, fd.data)


class TestGraphInvariants:
    def test_constant_folding_skips_nodes(self):
        out = ad.add(constant([1.0]), constant([2.0]))
        assert out.node is None and not out.requires_grad

    def test_all_values_finite_after_ops(self):
        rng = np.random.default_rng(12)
        x = Tensor(rng.normal(size=(4, 4)) * 100, requires_grad=True)
        for op in (sigmoid, relu, softmax):
            assert np.all(np.isfinite(op(x).data))

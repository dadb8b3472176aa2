import numpy as np
import pytest

import shotvae.autodiff as ad
from shotvae.autodiff import (
    DomainError,
    GraphError,
    ShapeError,
    Tensor,
    backward,
    zero_grad,
)

from conftest import check_gradients


class TestMatmul:
    def test_identity(self):
        eye = Tensor(np.eye(2))
        out = ad.matmul(eye, eye)
        np.testing.assert_array_equal(out.data, np.eye(2))

    def test_hand_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).data, [[3.0], [7.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_gradient_matches_finite_differences(self, rng):
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        check_gradients(lambda: ad.reduce_sum(ad.matmul(a, b)), [a, b], tol=1e-6)


class TestElementwise:
    def test_softmax_uniform_on_equal_logits(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0]))
        np.testing.assert_allclose(out.data, np.full(3, 1 / 3), atol=1e-15)

    def test_exp_log_inverse(self, rng):
        x = Tensor(rng.uniform(0.1, 5.0, size=10))
        np.testing.assert_allclose(ad.exp(ad.log(x)).data, x.data, atol=1e-12)

    def test_log_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            ad.log(Tensor([1.0, 0.0]))
        with pytest.raises(DomainError):
            ad.log(Tensor([-1.0]))

    def test_broadcast_failure_raises(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_softmax_shift_invariance(self, rng):
        logits = rng.standard_normal((5, 7))
        a = ad.softmax(Tensor(logits)).data
        b = ad.softmax(Tensor(logits + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)

    def test_softmax_cross_entropy_gradient(self, rng):
        logits = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        target = Tensor(np.eye(5)[rng.integers(5, size=4)])

        def loss():
            log_p = ad.log(ad.clip(ad.softmax(logits), 1e-300, 1.0))
            return ad.scale(ad.reduce_sum(ad.mul(target, log_p)), -1.0)

        check_gradients(loss, [logits], tol=1e-6)

    @pytest.mark.parametrize("op", [ad.relu, ad.sigmoid, ad.square, ad.exp])
    def test_unary_gradients(self, op, rng):
        x = Tensor(rng.uniform(0.2, 2.0, size=(3, 4)), requires_grad=True)
        check_gradients(lambda: ad.reduce_sum(ad.square(op(x))), [x], tol=1e-5)

    def test_div_gradient_and_zero_denominator(self, rng):
        a = Tensor(rng.uniform(0.5, 2.0, size=(3,)), requires_grad=True)
        b = Tensor(rng.uniform(0.5, 2.0, size=(3,)), requires_grad=True)
        check_gradients(lambda: ad.reduce_sum(ad.div(a, b)), [a, b], tol=1e-6)
        with pytest.raises(DomainError):
            ad.div(a, Tensor([1.0, 0.0, 1.0]))

    def test_broadcast_gradients(self, rng):
        m = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        bias = Tensor(rng.standard_normal(3), requires_grad=True)
        check_gradients(lambda: ad.reduce_sum(ad.square(ad.add(m, bias))), [m, bias], tol=1e-6)


class TestReduce:
    def test_sum_of_ones(self):
        assert ad.reduce_sum(Tensor(np.ones((2, 3)))).item() == 6.0

    def test_mean_axis0(self):
        out = ad.reduce_mean(Tensor([[1.0, 3.0], [3.0, 5.0]]), axis=0)
        np.testing.assert_array_equal(out.data, [2.0, 4.0])

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            ad.reduce_sum(Tensor(np.ones((2, 3))), axis=2)
        with pytest.raises(ShapeError):
            ad.reduce_mean(Tensor(np.ones(3)), axis=-2)

    def test_mean_gradient_tight(self, rng):
        x = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        zero_grad([x])
        backward(ad.reduce_mean(x))
        np.testing.assert_allclose(x.grad, np.full((4, 5), 1 / 20), atol=1e-8)


class TestBackward:
    def test_sum_gradient_is_ones(self, rng):
        w = Tensor(rng.standard_normal(6), requires_grad=True)
        backward(ad.reduce_sum(w))
        np.testing.assert_array_equal(w.grad, np.ones(6))

    def test_square_gradient(self, rng):
        w = Tensor(rng.standard_normal(6), requires_grad=True)
        backward(ad.reduce_sum(ad.square(w)))
        np.testing.assert_allclose(w.grad, 2 * w.data, atol=1e-12)

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(GraphError):
            backward(Tensor(np.ones(3)))

    def test_accumulation_and_zero_grad(self, rng):
        w = Tensor(rng.standard_normal(4), requires_grad=True)
        backward(ad.reduce_sum(w))
        backward(ad.reduce_sum(w))
        np.testing.assert_array_equal(w.grad, 2 * np.ones(4))
        zero_grad([w])
        assert w.grad is None

    def test_shared_subexpression(self, rng):
        # x used twice: d/dx sum(x*x + x) = 2x + 1
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        backward(ad.reduce_sum(ad.add(ad.mul(x, x), x)))
        np.testing.assert_allclose(x.grad, 2 * x.data + 1, atol=1e-12)

    def test_same_tensor_to_both_operands(self, rng):
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        backward(ad.reduce_sum(ad.add(x, x)))
        np.testing.assert_array_equal(x.grad, 2 * np.ones(5))

    def test_stop_gradient_blocks(self, rng):
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        backward(ad.reduce_sum(ad.mul(x, ad.stop_gradient(x))))
        # treated as x * const, so gradient is the constant copy, not 2x
        np.testing.assert_allclose(x.grad, x.data, atol=1e-12)

    def test_take_rows_scatter(self):
        x = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        backward(ad.reduce_sum(ad.take_rows(x, np.array([0, 0, 2]))))
        np.testing.assert_array_equal(x.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])

    def test_clip_gradient_mask(self):
        x = Tensor(np.array([-2.0, 0.5, 2.0]), requires_grad=True)
        backward(ad.reduce_sum(ad.clip(x, -1.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])

    def test_composed_graph_finite_differences(self, rng):
        w1 = Tensor(rng.standard_normal((4, 6)) * 0.4, requires_grad=True)
        b1 = Tensor(rng.standard_normal(6) * 0.1, requires_grad=True)
        w2 = Tensor(rng.standard_normal((6, 3)) * 0.4, requires_grad=True)
        x = Tensor(rng.uniform(size=(5, 4)))

        def loss():
            h = ad.relu(ad.add(ad.matmul(x, w1), b1))
            p = ad.softmax(ad.matmul(h, w2))
            return ad.reduce_mean(ad.reduce_sum(ad.square(ad.sub(p, 0.3 * ad.sigmoid(h) @ w2)), axis=-1))

        check_gradients(loss, [w1, b1, w2], tol=1e-4)


class TestDeterminism:
    def test_forward_and_gradients_bit_identical(self, rng):
        x_data = rng.standard_normal((4, 4))

        def run():
            x = Tensor(x_data.copy(), requires_grad=True)
            out = ad.reduce_sum(ad.softmax(ad.matmul(x, x)))
            backward(out)
            return out.data.copy(), x.grad.copy()

        v1, g1 = run()
        v2, g2 = run()
        assert np.array_equal(v1, v2)
        assert np.array_equal(g1, g2)

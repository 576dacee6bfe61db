import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutlab.autodiff import Tensor, const, param


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    flat = g.reshape(-1)
    xf = x.reshape(-1)
    for k in range(x.size):
        orig = xf[k]
        xf[k] = orig + eps
        up = f(x)
        xf[k] = orig - eps
        down = f(x)
        xf[k] = orig
        flat[k] = (up - down) / (2 * eps)
    return g


def check(op, x0, tol=1e-6):
    """Compare tape gradient of sum(op(x)) against central differences."""
    t = param(x0.copy())
    out = op(t).sum()
    out.backward()

    def f(x):
        return float(op(const(x)).sum().value)

    expected = numeric_grad(f, x0.copy())
    assert np.allclose(t.grad, expected, atol=tol), f"{t.grad} vs {expected}"


RNG = np.random.default_rng(0)


class TestElementwise:
    def test_relu(self):
        check(lambda t: t.relu(), RNG.standard_normal((3, 4)))

    def test_sigmoid(self):
        check(lambda t: t.sigmoid(), RNG.standard_normal((3, 4)))

    def test_exp_log(self):
        check(lambda t: t.exp(), RNG.standard_normal((2, 3)))
        check(lambda t: t.log(), RNG.uniform(0.2, 3.0, (2, 3)))

    def test_sqrt_reciprocal(self):
        check(lambda t: t.sqrt(), RNG.uniform(0.5, 2.0, (4,)))
        check(lambda t: t.reciprocal(), RNG.uniform(0.5, 2.0, (4,)))

    def test_clip_passes_gradient_inside(self):
        check(lambda t: t.clip(-0.5, 0.5) * 3.0, RNG.uniform(-0.4, 0.4, (5,)))

    def test_clip_blocks_gradient_outside(self):
        t = param(np.array([2.0, -2.0]))
        t.clip(-0.5, 0.5).sum().backward()
        assert np.array_equal(t.grad, np.zeros(2))


class TestCombinators:
    def test_add_broadcast_bias(self):
        x = RNG.standard_normal((3, 4))
        b = param(RNG.standard_normal(4))
        ((const(x) + b) * 2.0).sum().backward()
        assert np.allclose(b.grad, np.full(4, 6.0))

    def test_mul_broadcast(self):
        a = param(RNG.standard_normal((3, 1)))
        other = const(RNG.standard_normal((3, 4)))
        (a * other).sum().backward()
        assert a.grad.shape == (3, 1)
        assert np.allclose(a.grad, other.value.sum(axis=1, keepdims=True))

    @pytest.mark.parametrize(
        "a_shape,b_shape",
        [((3, 4), (4, 5)), ((4,), (4, 5)), ((3, 4), (4,)), ((4,), (4,))],
    )
    def test_matmul_shapes(self, a_shape, b_shape):
        a0 = RNG.standard_normal(a_shape)
        b0 = RNG.standard_normal(b_shape)
        a, b = param(a0.copy()), param(b0.copy())
        (a @ b).sum().backward()

        def fa(x):
            return float((const(x) @ const(b0)).sum().value)

        def fb(x):
            return float((const(a0) @ const(x)).sum().value)

        assert np.allclose(a.grad, numeric_grad(fa, a0.copy()))
        assert np.allclose(b.grad, numeric_grad(fb, b0.copy()))

    def test_transpose(self):
        check(lambda t: (t.T @ t), RNG.standard_normal((3, 2)))

    def test_concat_splits_gradient(self):
        a = param(np.ones((2, 2)))
        b = param(np.ones((2, 3)))
        out = Tensor.concat([a, b], axis=1)
        (out * const(np.arange(10).reshape(2, 5))).sum().backward()
        assert np.array_equal(a.grad, np.array([[0.0, 1.0], [5.0, 6.0]]))
        assert np.array_equal(b.grad, np.array([[2.0, 3.0, 4.0], [7.0, 8.0, 9.0]]))

    def test_sum_axis(self):
        weights = const(RNG.standard_normal(4))
        check(lambda t: t.sum(axis=0) @ weights, RNG.standard_normal((3, 4)))

    def test_mean(self):
        t = param(np.arange(6.0).reshape(2, 3))
        t.mean().backward()
        assert np.allclose(t.grad, np.full((2, 3), 1 / 6))

    def test_mean_axis0(self):
        t = param(np.arange(6.0).reshape(2, 3))
        (t.mean(axis=0) * const(np.array([1.0, 2.0, 3.0]))).sum().backward()
        assert np.allclose(t.grad, np.tile([0.5, 1.0, 1.5], (2, 1)))


class TestGraphMechanics:
    def test_diamond_accumulates(self):
        x = param(np.array(2.0))
        y = x * x
        z = y + y
        z.backward()
        assert np.allclose(x.grad, 8.0)

    def test_reused_parameter_in_two_branches(self):
        w = param(np.array([1.0, 2.0]))
        out = (w * 3.0).sum() + (w * w).sum()
        out.backward()
        assert np.allclose(w.grad, [5.0, 7.0])

    def test_backward_requires_scalar(self):
        with pytest.raises(ValueError):
            param(np.ones(3)).backward()

    def test_constants_skip_gradients(self):
        c = const(np.ones(3))
        (c * 2.0).sum().backward()
        assert c.grad is None

    @given(st.lists(st.floats(-3, 3), min_size=2, max_size=6))
    @settings(max_examples=50)
    def test_softmax_like_chain(self, values):
        x0 = np.array(values)
        t = param(x0.copy())
        z = (t - t.mean()).exp()
        loss = (z * z).mean().log()
        loss.backward()

        def f(x):
            tt = const(x)
            zz = (tt - tt.mean()).exp()
            return float((zz * zz).mean().log().value)

        assert np.allclose(t.grad, numeric_grad(f, x0.copy()), atol=1e-5)

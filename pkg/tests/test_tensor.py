"""Autograd core: known-value cases, adjoint checks, and invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import structseg.tensor as T
from structseg.errors import ConfigError, GraphError, ShapeError
from structseg.gradcheck import finite_diff_check
from structseg.tensor import Tensor, backward


def rand(shape, seed=0, dtype=np.float64):
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, shape).astype(dtype)


class TestMatmul:
    def test_identity(self):
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = T.matmul(Tensor(np.eye(2, dtype=np.float32)), b)
        np.testing.assert_array_equal(out.data, b.data)

    def test_known_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, [[19, 22], [43, 50]])

    def test_gradient_matches_finite_differences(self):
        b_fixed = Tensor(rand((4, 2), seed=1))

        def f(x):
            return T.sum_all(T.matmul(x, b_fixed))

        err = finite_diff_check(f, Tensor(rand((3, 4)), requires_grad=True))
        assert err < 1e-6

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"3.*4"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))

    def test_batched(self):
        a, b = rand((5, 2, 3)), rand((5, 3, 4), seed=2)
        out = T.matmul(Tensor(a), Tensor(b))
        np.testing.assert_allclose(out.data, np.matmul(a, b), rtol=1e-12)


class TestSoftmax:
    def test_uniform_lane(self):
        out = T.softmax(Tensor([3.0, 3.0, 3.0, 3.0]), axis=0)
        np.testing.assert_allclose(out.data, [0.25] * 4, atol=1e-7)

    def test_closed_form(self):
        out = T.softmax(Tensor([0.0, np.log(2.0)], dtype=np.float64), axis=0)
        np.testing.assert_allclose(out.data, [1 / 3, 2 / 3], atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=8),
           st.floats(-50, 50))
    def test_shift_invariance(self, lane, c):
        x = np.array(lane, dtype=np.float64)
        a = T.softmax(Tensor(x), axis=0).data
        b = T.softmax(Tensor(x + c), axis=0).data
        assert np.abs(a - b).max() < 1e-7

    def test_lanes_sum_to_one(self):
        out = T.softmax(Tensor(rand((3, 5, 7))), axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)


def conv2d_bruteforce(x, w, b=None, groups=1, padding=0, stride=1):
    """Direct sliding-window oracle, independent of the im2col path."""
    B, cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    p, s = padding, stride
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    oh = (h + 2 * p - kh) // s + 1
    ow = (wd + 2 * p - kw) // s + 1
    out = np.zeros((B, cout, oh, ow), dtype=x.dtype)
    cin_g = cin // groups
    cout_g = cout // groups
    for bi in range(B):
        for co in range(cout):
            g = co // cout_g
            for oy in range(oh):
                for ox in range(ow):
                    acc = 0.0
                    for ci in range(cpg):
                        for i in range(kh):
                            for j in range(kw):
                                acc += (xp[bi, g * cin_g + ci, oy * s + i, ox * s + j]
                                        * w[co, ci, i, j])
                    out[bi, co, oy, ox] = acc
            if b is not None:
                out[bi, co] += b[co]
    return out


class TestConv2d:
    def test_identity_mixing_1x1(self):
        x = Tensor(rand((1, 3, 4, 4)))
        w = Tensor(np.eye(3, dtype=np.float64).reshape(3, 3, 1, 1))
        out = T.conv2d(x, w)
        np.testing.assert_array_equal(out.data, x.data)

    def test_depthwise_center_delta(self):
        x = Tensor(rand((2, 3, 5, 5)))
        w = np.zeros((3, 1, 3, 3))
        w[:, 0, 1, 1] = 1.0
        out = T.conv2d(x, Tensor(w), groups=3, padding=1)
        np.testing.assert_array_equal(out.data, x.data)

    def test_ones_kernel_hit_counts(self):
        x = Tensor(np.ones((1, 1, 4, 4)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        out = T.conv2d(x, w, padding=1).data[0, 0]
        oracle = conv2d_bruteforce(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)),
                                   padding=1)[0, 0]
        np.testing.assert_array_equal(out, oracle)
        assert out[0, 0] == 4 and out[0, 1] == 6 and out[1, 1] == 9

    @pytest.mark.parametrize("groups,stride,padding", [(1, 1, 1), (2, 1, 0), (4, 2, 1)])
    def test_matches_bruteforce(self, groups, stride, padding):
        x = rand((2, 4, 6, 6), seed=3)
        w = rand((4, 4 // groups, 3, 3), seed=4)
        b = rand((4,), seed=5)
        out = T.conv2d(Tensor(x), Tensor(w), Tensor(b), groups=groups,
                       padding=padding, stride=stride)
        np.testing.assert_allclose(
            out.data, conv2d_bruteforce(x, w, b, groups, padding, stride), atol=1e-12)

    def test_divisibility_error(self):
        with pytest.raises(ConfigError):
            T.conv2d(Tensor(rand((1, 3, 4, 4))), Tensor(rand((2, 1, 1, 1))), groups=2)

    def test_gradients(self):
        x0 = rand((1, 2, 4, 4), seed=6)
        w0 = rand((4, 1, 3, 3), seed=7)
        b0 = rand((4,), seed=8)

        for pick in range(3):
            tensors = [Tensor(x0.copy()), Tensor(w0.copy()), Tensor(b0.copy())]

            def f(t, pick=pick, tensors=tensors):
                args = list(tensors)
                args[pick] = t
                return T.sum_all(T.mul(
                    T.conv2d(args[0], args[1], args[2], groups=2, padding=1),
                    T.conv2d(args[0], args[1], args[2], groups=2, padding=1)))

            assert finite_diff_check(f, tensors[pick]) < 1e-6


class TestConcatSplit:
    def test_channel_count(self):
        s, f = Tensor(rand((3, 2, 2))), Tensor(rand((5, 2, 2), seed=1))
        assert T.concat_channels([s, f]).shape == (8, 2, 2)

    def test_split_concat_roundtrip_exact(self):
        s, f = rand((3, 4, 4)), rand((5, 4, 4), seed=1)
        joined = T.concat_channels([Tensor(s), Tensor(f)])
        s2, f2 = T.split_channels(joined, [3, 5])
        np.testing.assert_array_equal(s2.data, s)
        np.testing.assert_array_equal(f2.data, f)

    def test_gradient_routes_back(self):
        s = Tensor(rand((3, 2, 2)), requires_grad=True)
        f = Tensor(rand((5, 2, 2), seed=1), requires_grad=True)
        backward(T.sum_all(T.concat_channels([s, f])))
        np.testing.assert_array_equal(s.grad, np.ones_like(s.data))
        np.testing.assert_array_equal(f.grad, np.ones_like(f.data))

    def test_split_sizes_must_sum(self):
        with pytest.raises(ShapeError):
            T.split_channels(Tensor(rand((4, 2, 2))), [3, 2])

    def test_mismatched_spatial_dims(self):
        with pytest.raises(ShapeError):
            T.concat_channels([Tensor(rand((2, 3, 3))), Tensor(rand((2, 4, 4)))])

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
    def test_roundtrip_property(self, k, c, hw):
        x = rand((k + c, hw, hw), seed=k * 7 + c)
        parts = T.split_channels(Tensor(x), [k, c])
        back = T.concat_channels(parts)
        np.testing.assert_array_equal(back.data, x)


class TestBilinearResize:
    def test_same_size_is_identity(self):
        x = rand((2, 5, 7))
        np.testing.assert_array_equal(T.bilinear_resize(Tensor(x), 5, 7).data, x)

    def test_constant_stays_constant(self):
        x = np.full((1, 4, 4), 3.25)
        out = T.bilinear_resize(Tensor(x, dtype=np.float64), 9, 13).data
        np.testing.assert_allclose(out, 3.25, rtol=1e-12)

    def test_one_pixel_input(self):
        out = T.bilinear_resize(Tensor(np.full((3, 1, 1), 0.5)), 4, 4).data
        np.testing.assert_array_equal(out, np.full((3, 4, 4), 0.5, dtype=np.float32))

    def test_gradient(self):
        def f(t):
            y = T.bilinear_resize(t, 5, 3)
            return T.sum_all(T.mul(y, y))

        assert finite_diff_check(f, Tensor(rand((2, 4, 4)))) < 1e-6

    def test_4d_input(self):
        x = rand((2, 3, 4, 4))
        out = T.bilinear_resize(Tensor(x), 8, 8)
        assert out.shape == (2, 3, 8, 8)


class TestElementwise:
    def test_relu_values(self):
        out = T.relu(Tensor([-1.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 2.0])

    def test_gelu_zero(self):
        assert T.gelu(Tensor([0.0])).data[0] == 0.0

    def test_gelu_uses_documented_constant(self):
        assert T.GELU_CUBIC == 0.044715

    def test_add_gradient_pass_through(self):
        a = Tensor(rand((3, 3)), requires_grad=True)
        b = Tensor(rand((3, 3), seed=1), requires_grad=True)
        backward(T.sum_all(T.add(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones((3, 3)))
        np.testing.assert_array_equal(b.grad, np.ones((3, 3)))

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((3, 2))))


class TestBackward:
    def test_linear_loss_grad(self):
        x = Tensor(rand((4, 4)), requires_grad=True)
        backward(T.sum_all(T.scale(x, 2.0)))
        np.testing.assert_array_equal(x.grad, np.full((4, 4), 2.0))

    def test_quadratic_grad(self):
        x = Tensor([3.0], requires_grad=True)
        backward(T.sum_all(T.mul(x, x)))
        np.testing.assert_allclose(x.grad, [6.0], rtol=1e-6)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(rand((2, 2)), requires_grad=True)
        with pytest.raises(GraphError):
            backward(T.scale(x, 1.0))

    def test_backward_twice_rejected(self):
        x = Tensor(rand((2, 2)), requires_grad=True)
        loss = T.sum_all(T.mul(x, x))
        backward(loss)
        with pytest.raises(GraphError):
            backward(loss)

    def test_shared_subgraph_consumed(self):
        x = Tensor(rand((2, 2)), requires_grad=True)
        y = T.mul(x, x)
        backward(T.sum_all(y))
        with pytest.raises(GraphError):
            backward(T.sum_all(y))

    def test_grad_accumulates_over_fanout(self):
        x = Tensor([2.0], requires_grad=True)
        backward(T.sum_all(T.add(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0])


class TestFiniteDiffCheck:
    def test_linear_function_near_machine_precision(self):
        err = finite_diff_check(lambda t: T.sum_all(T.scale(t, 3.0)),
                                Tensor(rand((3, 3))))
        assert err < 1e-9

    def test_quadratic(self):
        err = finite_diff_check(lambda t: T.sum_all(T.mul(t, t)),
                                Tensor(rand((3, 3))))
        assert err < 1e-8

    def test_softmax_matmul_composite_converges(self):
        w = Tensor(rand((4, 3), seed=9))

        def f(t):
            return T.sum_all(T.mul(T.softmax(T.matmul(t, w), axis=-1),
                                   T.softmax(T.matmul(t, w), axis=-1)))

        errs = [finite_diff_check(f, Tensor(rand((2, 4))), eps=e)
                for e in (1e-3, 1e-4)]
        assert errs[-1] < 1e-6

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda t: T.sum_all(t), Tensor(rand((2,))), eps=0.0)


class TestEveryOpGradient:
    """Spec invariant: each differentiable op below 1e-5 in double precision."""

    CASES = {
        "add": lambda t: T.add(t, T.scale(t, 0.5)),
        "mul": lambda t: T.mul(t, T.add(t, t)),
        "scale": lambda t: T.scale(t, -1.7),
        "relu": lambda t: T.relu(t),
        "gelu": lambda t: T.gelu(t),
        "softmax": lambda t: T.softmax(t, axis=-1),
        "reshape": lambda t: T.reshape(t, (4, 4)),
        "transpose": lambda t: T.transpose_last2(t),
        "standardize": lambda t: T.standardize_spatial(T.reshape(t, (1, 4, 4))),
        "resize_up": lambda t: T.bilinear_resize(T.reshape(t, (1, 4, 4)), 7, 5),
        "resize_down": lambda t: T.bilinear_resize(T.reshape(t, (1, 4, 4)), 3, 2),
    }

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_op(self, name):
        op = self.CASES[name]

        def f(t):
            y = op(t)
            return T.sum_all(T.mul(y, y))

        # offset away from relu's kink at zero
        x = Tensor(rand((2, 8), seed=11) + 2.0)
        assert finite_diff_check(f, x) < 1e-5


class TestDeterminismAndDebug:
    def test_bitwise_determinism(self):
        def run():
            x = Tensor(rand((4, 6)), requires_grad=True)
            y = T.softmax(T.matmul(x, Tensor(rand((6, 3), seed=1))), axis=-1)
            loss = T.sum_all(T.mul(y, y))
            backward(loss)
            return loss.data.tobytes(), x.grad.tobytes()

        assert run() == run()

    def test_debug_mode_catches_nonfinite(self):
        T.set_debug_checks(True)
        try:
            with pytest.raises(FloatingPointError):
                T.scale(Tensor([1e38], dtype=np.float32), 1e38)
        finally:
            T.set_debug_checks(False)

    def test_no_grad_blocks_recording(self):
        x = Tensor(rand((2, 2)), requires_grad=True)
        with T.no_grad():
            y = T.scale(x, 2.0)
        assert not y.requires_grad and y.is_leaf

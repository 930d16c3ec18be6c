import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from augself import tensor as T
from augself.tensor import NumericError, ShapeError, Tensor, finite_diff_check

finite = st.floats(-10, 10, allow_nan=False)


def leaf(data):
    return Tensor(np.asarray(data, dtype=float), requires_grad=True)


# -- matmul -----------------------------------------------------------------


def test_matmul_identity():
    m = np.array([[1.5, -2.0], [0.25, 4.0]])
    assert np.array_equal(T.matmul(np.eye(2), m).data, m)


def test_matmul_hand_arithmetic():
    out = T.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    assert np.array_equal(out.data, [[3.0], [7.0]])


def test_matmul_gradient_is_ones_times_bt():
    rng = np.random.default_rng(1)
    a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
    (a @ b).sum().backward()
    assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    assert finite_diff_check(lambda a, b: (a @ b).sum(), [a, b]) < 1e-6


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(np.ones((2, 3)), np.ones((2, 3)))


# -- conv2d -----------------------------------------------------------------


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 3, 5, 5))
    kernel = np.zeros((3, 3, 1, 1))
    kernel[np.arange(3), np.arange(3)] = 1.0
    assert np.array_equal(T.conv2d(x, kernel).data, x)


def test_conv_ones_sum_nine():
    out = T.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)))
    assert out.shape == (1, 1, 1, 1) and out.item() == 9.0


def test_conv_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    x, k = leaf(rng.normal(size=(1, 2, 6, 6))), leaf(rng.normal(size=(3, 2, 3, 3)))
    w = rng.normal(size=(1, 3, 3, 3))
    assert finite_diff_check(lambda x, k: (T.conv2d(x, k, 2, 1) * w).sum(), [x, k]) < 1e-6


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(3)
    x, k = rng.normal(size=(2, 2, 5, 5)), rng.normal(size=(4, 2, 3, 3))
    out = T.conv2d(x, k, stride=2, pad=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(out)
    for i in range(out.shape[2]):
        for j in range(out.shape[3]):
            patch = xp[:, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 3]
            ref[:, :, i, j] = np.einsum("ncij,ocij->no", patch, k)
    assert np.allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("stride,pad", [(0, 0), (1, -1), (1.5, 0)])
def test_conv_rejects_bad_parameters(stride, pad):
    with pytest.raises(ValueError):
        T.conv2d(np.ones((1, 1, 4, 4)), np.ones((1, 1, 3, 3)), stride, pad)


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError):
        T.conv2d(np.ones((1, 1, 2, 2)), np.ones((1, 1, 3, 3)))


# -- backward ---------------------------------------------------------------


def test_square_gradient():
    x = leaf(3.0)
    T.square(x).backward()
    assert x.grad == 6.0


def test_constant_loss_gives_zero_gradient():
    x = leaf([1.0, 2.0])
    (x * 0.0 + 5.0).sum().backward()
    assert np.array_equal(x.grad, [0.0, 0.0])


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        (leaf([1.0, 2.0]) * 2).backward()


def test_gradients_accumulate_across_calls():
    x = leaf(2.0)
    for _ in range(3):
        (x * x).backward()
    assert x.grad == 12.0
    x.zero_grad()
    assert x.grad is None


def test_diamond_graph_sums_paths():
    x = leaf(1.5)
    shared = x * x
    loss = T.tanh(shared) + 3.0 * shared
    loss.backward()
    # d/dx [tanh(x^2) + 3 x^2] = 2x (1 - tanh(x^2)^2) + 6x
    expected = 2 * 1.5 * (1 - np.tanh(2.25) ** 2) + 6 * 1.5
    assert x.grad == pytest.approx(expected, rel=1e-14)


def test_two_layer_mlp_gradient():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 3))
    w1, w2 = leaf(rng.normal(size=(3, 7))), leaf(rng.normal(size=(7, 1)))

    def loss(w1, w2):
        return T.square(T.tanh(x @ w1) @ w2).mean()

    assert finite_diff_check(loss, [w1, w2]) < 1e-5


def test_no_grad_records_nothing():
    x = leaf(2.0)
    with T.no_grad():
        y = x * x
    assert not y.requires_grad and y.is_leaf


# -- broadcasting -------------------------------------------------------------


def test_broadcast_trailing_expansion():
    a, b = leaf(np.ones((3, 4))), leaf(np.arange(4.0))
    (a * b).sum().backward()
    assert np.array_equal(b.grad, [3.0, 3.0, 3.0, 3.0])
    assert np.array_equal(a.grad, np.tile(np.arange(4.0), (3, 1)))


def test_mutual_broadcast_rejected():
    with pytest.raises(ShapeError):
        T.add(np.ones((3, 1)), np.ones((1, 4)))


# -- shift, pad, slicing ------------------------------------------------------


def test_shift2d_zero_fill_and_adjoint():
    x = leaf(np.arange(16.0).reshape(1, 1, 4, 4))
    out = T.shift2d(x, [1], [-1])
    assert np.array_equal(out.data[0, 0, 0], np.zeros(4))
    assert np.array_equal(out.data[0, 0, 1:, :3], x.data[0, 0, :3, 1:])
    out.sum().backward()
    # each surviving input pixel feeds exactly one output pixel
    assert x.grad.sum() == 9.0


def test_getitem_repeated_indices_accumulate():
    x = leaf(np.arange(3.0))
    x[np.array([0, 0, 2])].sum().backward()
    assert np.array_equal(x.grad, [2.0, 0.0, 1.0])


def test_pad2d_shape():
    assert T.pad2d(np.ones((1, 2, 3, 3)), 2).shape == (1, 2, 7, 7)


# -- finite_diff_check ----------------------------------------------------------


def test_fd_exact_on_quadratic():
    assert finite_diff_check(lambda x: T.square(x).sum(), [leaf([1.0])], eps=1e-5) < 1e-8


def test_fd_sine_of_sum():
    rng = np.random.default_rng(5)
    x = leaf(rng.normal(size=4))
    assert finite_diff_check(lambda x: T.sin(x.sum()), [x]) < 1e-6
    assert np.allclose(x.grad, np.cos(x.data.sum()))


def test_fd_constant_function():
    assert finite_diff_check(lambda x: x.sum() * 0.0 + 1.0, [leaf([1.0, 2.0])]) == 0.0


def test_fd_raises_on_non_finite():
    with pytest.raises(NumericError), np.errstate(invalid="ignore"):
        finite_diff_check(lambda x: T.log(x).sum(), [leaf([-1.0])])


# -- properties -----------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite))
def test_elementwise_forward_matches_numpy(a, b):
    assert np.array_equal(T.add(a, b).data, a + b)
    assert np.array_equal(T.mul(a, b).data, a * b)
    assert np.array_equal(T.sub(a, b).data, a - b)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 5), elements=st.floats(-30, 30, allow_nan=False)))
def test_stable_activations_are_finite(x):
    s, sp = T.sigmoid(x).data, T.softplus(x).data
    assert np.all((s >= 0) & (s <= 1)) and np.all(np.isfinite(sp))
    assert np.allclose(sp, np.logaddexp(0.0, x))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 3), elements=finite))
def test_forward_is_deterministic(x):
    f = lambda: T.tanh(T.leaky_relu(x) @ np.ones((3, 2))).data  # noqa: E731
    assert np.array_equal(f(), f())


def test_relu_propagates_nan():
    assert np.isnan(T.relu(np.array([np.nan])).data[0])
    assert np.isnan(T.leaky_relu(np.array([np.nan])).data[0])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgepan.errors import ContractViolation, DimensionError, NumericError
from bridgepan.tensor import (
    Prng,
    Tensor,
    concat,
    conv2d,
    elementwise,
    mat_inverse,
    matmul,
    softmax,
)

from helpers import check_grad, finite_diff_grad, rel_err


# -- elementwise --------------------------------------------------------------


def test_mul_hadamard():
    out = elementwise("mul", Tensor([1, 2, 3]), Tensor([4, 5, 6]))
    np.testing.assert_array_equal(out.data, np.array([4, 10, 18], dtype=np.float32))


def test_add_identity():
    x = Tensor([1.5, -2.0, 0.25])
    out = elementwise("add", x, 0.0)
    np.testing.assert_array_equal(out.data, x.data)


def test_exp_values():
    out = elementwise("exp", Tensor([0.0, 1.0]))
    np.testing.assert_allclose(out.data, [1.0, 2.7182817], rtol=1e-6)


def test_div_by_zero_is_ieee_inf():
    out = elementwise("div", Tensor([1.0, -1.0]), Tensor([0.0, 0.0]))
    assert np.isposinf(out.data[0]) and np.isneginf(out.data[1])


def test_shape_mismatch_raises_dimension_error():
    with pytest.raises(DimensionError):
        elementwise("add", Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_broadcast_matches_tiled():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (3, 1, 4))
    b = rng.uniform(-1, 1, (5, 4))
    lhs = elementwise("mul", Tensor(a), Tensor(b)).data
    rhs = elementwise(
        "mul",
        Tensor(np.broadcast_to(a, (3, 5, 4)).copy()),
        Tensor(np.broadcast_to(b, (3, 5, 4)).copy()),
    ).data
    np.testing.assert_array_equal(lhs, rhs)


@pytest.mark.parametrize("kind", ["add", "sub", "mul", "div"])
def test_binary_grads_vs_fd(kind):
    rng = np.random.default_rng(7)
    a = rng.uniform(-1, 1, (4, 3))
    b = rng.uniform(0.5, 1.5, (4, 3))  # keep div well away from 0

    def build(t):
        return elementwise(kind, t, Tensor(b, dtype=np.float64)).sum()

    check_grad(build, a)


@pytest.mark.parametrize("kind", ["exp", "tanh", "recip"])
def test_unary_grads_vs_fd(kind):
    rng = np.random.default_rng(8)
    a = rng.uniform(0.2, 1.0, (5,))
    check_grad(lambda t: elementwise(kind, t).sum(), a)


def test_pow_grad_vs_fd():
    rng = np.random.default_rng(9)
    a = rng.uniform(0.5, 1.5, (6,))
    check_grad(lambda t: (t ** 3).sum(), a)


@pytest.mark.parametrize("name", ["sigmoid", "silu", "elu1", "abs", "sqrt"])
def test_extra_unary_grads_vs_fd(name):
    rng = np.random.default_rng(10)
    a = rng.uniform(0.2, 1.0, (7,))
    check_grad(lambda t: getattr(t, name)().sum(), a)


# -- matmul -------------------------------------------------------------------


def test_matmul_identity():
    v = Tensor(np.arange(3.0).reshape(3, 1))
    out = matmul(Tensor.eye(3), v)
    np.testing.assert_array_equal(out.data, v.data)


def test_matmul_row_sums():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_inner_dim_mismatch():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


def test_matmul_grad_is_ones_bt():
    rng = np.random.default_rng(11)
    a = rng.uniform(-1, 1, (3, 4))
    b = rng.uniform(-1, 1, (4, 2))
    check_grad(lambda t: matmul(t, Tensor(b, dtype=np.float64)).sum(), a)
    # analytic form: d sum(A.B)/dA = ones . B^T
    leaf = Tensor(a, requires_grad=True, dtype=np.float64)
    matmul(leaf, Tensor(b, dtype=np.float64)).sum().backward()
    np.testing.assert_allclose(leaf.grad, np.ones((3, 2)) @ b.T, rtol=1e-12)


def test_matmul_batched_grad():
    rng = np.random.default_rng(12)
    a = rng.uniform(-1, 1, (2, 3, 4))
    b = rng.uniform(-1, 1, (4, 5))
    check_grad(lambda t: matmul(t, Tensor(b, dtype=np.float64)).sum(), a)
    check_grad(lambda t: (matmul(Tensor(a, dtype=np.float64), t) ** 2).sum(), b)


# -- conv2d -------------------------------------------------------------------


def test_conv2d_1x1_identity():
    rng = np.random.default_rng(13)
    x = rng.uniform(-1, 1, (1, 1, 5, 5)).astype(np.float32)
    w = np.ones((1, 1, 1, 1), dtype=np.float32)
    out = conv2d(Tensor(x), Tensor(w), stride=1, pad=0)
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_averaging_preserves_constant():
    x = np.full((1, 1, 6, 6), 0.7, dtype=np.float32)
    w = np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32)
    out = conv2d(Tensor(x), Tensor(w), stride=1, pad=0)
    np.testing.assert_allclose(out.data, 0.7, rtol=1e-6)


def test_conv2d_output_dims_and_channel_check():
    x = Tensor(np.zeros((2, 3, 9, 9)))
    w = Tensor(np.zeros((4, 3, 3, 3)))
    assert conv2d(x, w, stride=2, pad=1).shape == (2, 4, 5, 5)
    with pytest.raises(DimensionError):
        conv2d(x, Tensor(np.zeros((4, 2, 3, 3))))


def test_conv2d_grads_vs_fd():
    rng = np.random.default_rng(14)
    x = rng.uniform(-1, 1, (1, 2, 6, 6))
    w = rng.uniform(-1, 1, (3, 2, 3, 3))

    def build_x(t):
        return (conv2d(t, Tensor(w, dtype=np.float64), stride=2, pad=1) ** 2).sum()

    def build_w(t):
        return (conv2d(Tensor(x, dtype=np.float64), t, stride=2, pad=1) ** 2).sum()

    check_grad(build_x, x)
    check_grad(build_w, w)


# -- backward -----------------------------------------------------------------


def test_backward_sum_of_squares():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [2.0, 4.0], rtol=1e-6)


def test_backward_rejects_nonscalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractViolation):
        (x * x).backward()


def test_backward_inverse_matches_fd():
    rng = np.random.default_rng(15)
    a = rng.uniform(-1, 1, (2, 2)) + 2.0 * np.eye(2)
    check_grad(lambda t: mat_inverse(t).sum(), a, tol=1e-4)
    # analytic: d sum(A^-1)/dA = -(A^-1)^T . ones . (A^-1)^T
    leaf = Tensor(a, requires_grad=True, dtype=np.float64)
    mat_inverse(leaf).sum().backward()
    inv = np.linalg.inv(a)
    np.testing.assert_allclose(leaf.grad, -inv.T @ np.ones((2, 2)) @ inv.T, rtol=1e-9)


def test_backward_chained_graph_vs_fd():
    rng = np.random.default_rng(16)
    x = rng.uniform(-1, 1, (3, 3))

    def build(t):
        u = (t * t).tanh()
        v = (u * 0.5).exp()
        return (v * t).sum()

    check_grad(build, x)


def test_backward_replay_bit_identical():
    rng = np.random.default_rng(17)
    x = Tensor(rng.uniform(-1, 1, (4, 4)).astype(np.float32), requires_grad=True)
    loss = ((x * x).tanh() * x).sum()
    loss.backward()
    first = x.grad.copy()
    loss.backward()
    assert np.array_equal(first, x.grad)


# -- mat_inverse ---------------------------------------------------------------


def test_inverse_identity():
    out = mat_inverse(Tensor.eye(4))
    np.testing.assert_allclose(out.data, np.eye(4), atol=1e-7)


def test_inverse_diagonal():
    out = mat_inverse(Tensor([[2.0, 0.0], [0.0, 4.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.0], [0.0, 0.25]], rtol=1e-7)


def test_inverse_property_random_8x8():
    rng = np.random.default_rng(18)
    a = rng.uniform(-1, 1, (8, 8)) + 4.0 * np.eye(8)
    prod = mat_inverse(Tensor(a, dtype=np.float64)).data @ a
    np.testing.assert_allclose(prod, np.eye(8), atol=1e-6)


def test_inverse_rejects_singular_and_large():
    with pytest.raises(NumericError):
        mat_inverse(Tensor(np.ones((3, 3))))
    with pytest.raises(DimensionError):
        mat_inverse(Tensor(np.eye(17)))


# -- softmax / shape ops ---------------------------------------------------------


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(19)
    s = softmax(Tensor(rng.uniform(-5, 5, (6, 9))), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_grad_vs_fd():
    rng = np.random.default_rng(20)
    x = rng.uniform(-1, 1, (2, 5))
    check_grad(lambda t: (softmax(t, axis=-1) ** 2).sum(), x)


def test_shape_ops_grads_vs_fd():
    rng = np.random.default_rng(21)
    x = rng.uniform(-1, 1, (2, 3, 4))
    check_grad(lambda t: (t.reshape(6, 4) ** 2).sum(), x)
    check_grad(lambda t: (t.transpose(2, 0, 1) ** 3).sum(), x)
    check_grad(lambda t: (t[:, 1:, :2] ** 2).sum(), x)
    check_grad(lambda t: (concat([t, t * 2.0], axis=1) ** 2).sum(), x)
    check_grad(lambda t: (t.nearest_upsample2d(2) ** 2).sum(), x)
    check_grad(lambda t: t.l2norm(), x)
    check_grad(lambda t: (t.mean(axis=(0, 2)) ** 2).sum(), x)


def test_l2norm_zero_subgradient():
    x = Tensor(np.zeros((3, 3)), requires_grad=True)
    x.l2norm().backward()
    np.testing.assert_array_equal(x.grad, np.zeros((3, 3)))


# -- invariants (property-style) -------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False, width=32), min_size=2, max_size=8),
    st.sampled_from(["mul", "add", "tanh-chain"]),
)
def test_property_grad_matches_fd(values, kind):
    x = np.asarray(values, dtype=np.float64)

    def build(t):
        if kind == "mul":
            return (t * t).sum()
        if kind == "add":
            return (t + t * 2.0).sum()
        u = t.tanh()
        return (u * u).sum()

    check_grad(build, x, tol=1e-4)


# -- Prng -----------------------------------------------------------------------


def test_prng_same_seed_same_stream():
    a = Prng(1234)
    b = Prng(1234)
    np.testing.assert_array_equal(a.gaussian((100,)), b.gaussian((100,)))
    np.testing.assert_array_equal(a.uniform((50,)), b.uniform((50,)))
    assert a.randint(0, 1000) == b.randint(0, 1000)


def test_prng_different_seed_differs():
    assert not np.array_equal(Prng(1).gaussian((64,)), Prng(2).gaussian((64,)))


def test_prng_gaussian_moments():
    z = Prng(42).gaussian((200_000,), dtype=np.float64)
    n = z.size
    assert abs(z.mean()) < 4.0 / np.sqrt(n)
    assert abs(z.var() - 1.0) < 4.0 * np.sqrt(2.0 / n)


def test_prng_uniform_range_and_mean():
    u = Prng(7).uniform((100_000,))
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 4.0 * np.sqrt(1.0 / 12.0 / u.size)

import numpy as np
import pytest

from chainwatch.model.autodiff import (
    Tensor,
    as_tensor,
    concat,
    embedding,
    parameter,
    softmax,
)


def numeric_grad(fn, arrays, index, eps=1e-6):
    """Central finite differences of scalar fn wrt arrays[index]."""
    base = [np.array(a, dtype=float) for a in arrays]
    grad = np.zeros_like(base[index])
    flat = grad.ravel()
    target = base[index].ravel()
    for i in range(target.size):
        keep = target[i]
        target[i] = keep + eps
        up = fn(*base)
        target[i] = keep - eps
        down = fn(*base)
        target[i] = keep
        flat[i] = (up - down) / (2 * eps)
    return grad


def check_grads(build, arrays, tol=1e-6):
    """build(tensors) -> scalar Tensor; compares backward against FD."""
    tensors = [parameter(a) for a in arrays]
    out = build(*tensors)
    out.backward()

    def scalar(*raw):
        return float(build(*[Tensor(r) for r in raw]).data)

    for i, t in enumerate(tensors):
        expected = numeric_grad(scalar, arrays, i)
        scale = max(np.abs(expected).max(), 1.0)
        assert t.grad is not None
        np.testing.assert_allclose(t.grad, expected, atol=tol * scale,
                                   err_msg=f"input {i}")


def test_add_mul_broadcasting():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 1))
    b = rng.normal(size=(4,))
    w = rng.normal(size=(3, 4))
    check_grads(lambda x, y: ((x + y) * (x * y) * w).sum(), [a, b])


def test_sub_div():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 3)) + 3.0  # keep the divisor away from zero
    check_grads(lambda x, y: ((x - y) / y).sum(), [a, b])


def test_matmul_batched():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(2, 3, 4))
    b = rng.normal(size=(4, 5))
    w = rng.normal(size=(2, 3, 5))
    check_grads(lambda x, y: ((x @ y) * w).sum(), [a, b])


def test_elementwise_nonlinearities():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 3))
    check_grads(lambda t: (t.tanh() + t.sigmoid() + t.exp() + t.softplus()).sum(), [x])
    positive = np.abs(x) + 0.5
    check_grads(lambda t: t.log().sum(), [positive])


def test_relu_and_clamp_off_kink():
    # keep every entry > 0.1 away from the kink so FD is valid
    x = np.array([[-2.0, -0.7, 0.4], [1.3, -0.2, 2.5]])
    check_grads(lambda t: t.relu().sum(), [x])
    check_grads(lambda t: (t.clamp_min(0.0) * t.clamp_min(0.0)).sum(), [x])


def test_clamp_min_blocks_gradient_below_floor():
    x = parameter(np.array([0.5, 2.0]))
    out = x.clamp_min(1.0).sum()
    out.backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_sum_mean_axes():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(2, 4))
    check_grads(lambda t: (t.sum(axis=1) * w).sum(), [x])
    check_grads(lambda t: (t.mean(axis=1) * w).sum(), [x])
    check_grads(lambda t: t.sum(axis=2, keepdims=True).sum(), [x])
    check_grads(lambda t: t.mean().sum(), [x])


def test_cumsum():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 5))
    w = rng.normal(size=(2, 5))
    check_grads(lambda t: (t.cumsum(axis=1) * w).sum(), [x])
    # forward agrees with numpy
    t = Tensor(x)
    np.testing.assert_array_equal(t.cumsum(axis=1).data, np.cumsum(x, axis=1))


def test_reshape_swapaxes_getitem():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 3, 4))
    w = rng.normal(size=(4, 6))
    check_grads(lambda t: (t.reshape(4, 6) * w).sum(), [x])
    check_grads(lambda t: t.swapaxes(-1, -2).sum(), [x])
    w2 = rng.normal(size=(2, 2, 4))
    check_grads(lambda t: (t[:, 1:3, :] * w2).sum(), [x])


def test_getitem_repeated_rows_accumulate():
    x = parameter(np.arange(6.0).reshape(3, 2))
    picked = x[np.array([0, 0, 2])]
    picked.sum().backward()
    np.testing.assert_array_equal(x.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_concat_backward_splits_cleanly():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 2))
    w = rng.normal(size=(2, 5))
    check_grads(lambda x, y: (concat([x, y], axis=-1) * w).sum(), [a, b])
    check_grads(lambda x, y: concat([x.reshape(1, 2, 3), (y @ np.ones((2, 3))).reshape(1, 2, 3)],
                                    axis=0).sum(), [a, b])


def test_softmax_rows_and_gradient():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 5)) * 3
    s = softmax(Tensor(x), axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0, atol=1e-12)
    w = rng.normal(size=(3, 5))
    check_grads(lambda t: (softmax(t, axis=-1) * w).sum(), [x])
    # large logits stay finite thanks to the max shift
    big = softmax(Tensor(np.array([[1000.0, 1001.0]])), axis=-1)
    assert np.isfinite(big.data).all()


def test_embedding_sparse_update():
    table = parameter(np.arange(12.0).reshape(4, 3))
    ids = np.array([[1, 1], [3, 0]])
    out = embedding(table, ids)
    assert out.shape == (2, 2, 3)
    np.testing.assert_array_equal(out.data[0, 0], [3.0, 4.0, 5.0])
    (out * np.ones((2, 2, 3))).sum().backward()
    np.testing.assert_array_equal(
        table.grad,
        [[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])


def test_embedding_rejects_out_of_range():
    table = parameter(np.zeros((4, 3)))
    with pytest.raises(IndexError):
        embedding(table, np.array([4]))
    with pytest.raises(IndexError):
        embedding(table, np.array([-1]))


def test_gradient_accumulates_across_reuse():
    x = parameter(np.array([3.0]))
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_backward_requires_scalar_or_explicit_seed():
    x = parameter(np.ones((2, 2)))
    y = x * 2.0
    with pytest.raises(ValueError):
        y.backward()
    y.backward(np.ones((2, 2)))
    np.testing.assert_array_equal(x.grad, np.full((2, 2), 2.0))


def test_numpy_left_operand_returns_tensor():
    # ndarray <op> Tensor must defer to the Tensor op, not build object arrays
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    arr = np.full((2, 2), 3.0)
    for out in (arr * t, arr + t, arr - t, arr / t, arr @ t):
        assert isinstance(out, Tensor)
    np.testing.assert_array_equal((arr - t).data, np.full((2, 2), 2.0))
    np.testing.assert_array_equal((arr @ t).data, np.full((2, 2), 6.0))


def test_as_tensor_passthrough():
    t = Tensor(np.ones(3))
    assert as_tensor(t) is t
    assert isinstance(as_tensor(2.0), Tensor)


def test_second_backward_adds_into_existing_grad():
    x = parameter(np.array([1.0, 2.0]))
    x.sum().backward()
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 2.0])

"""Autodiff engine: graph construction, backward rules, usage errors."""

import numpy as np
import pytest

from mvts.errors import DimensionError, UsageError
from mvts.tensor import (
    Tensor,
    bmm,
    concat,
    default_dtype,
    matmul,
    minimum_const,
    narrow,
    power,
    set_default_dtype,
    zero_grads,
)


def test_tensor_wraps_and_casts():
    t = Tensor([[1, 2], [3, 4]])
    assert t.data.dtype == np.float64
    assert t.shape == (2, 2)
    assert t.ndim == 2
    assert t.size == 4
    assert not t.requires_grad


def test_item_requires_single_element():
    assert Tensor(3.5).item() == 3.5
    with pytest.raises(UsageError):
        Tensor([1.0, 2.0]).item()


def test_backward_requires_scalar_root():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(UsageError):
        (x * 2.0).backward()


def test_backward_requires_grad_root():
    x = Tensor([1.0, 2.0])
    with pytest.raises(UsageError):
        (x * 2.0).sum().backward()


def test_simple_chain_gradient():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = ((x * x) * 2.0 + x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 4.0 * x.data + 1.0)


def test_diamond_graph_accumulates_both_paths():
    x = Tensor(2.0, requires_grad=True)
    a = x * 3.0
    b = x * 5.0
    (a * b).backward()  # d/dx 15x^2 = 30x
    np.testing.assert_allclose(x.grad, 60.0)


def test_node_reused_twice_in_one_expression():
    x = Tensor([1.0, 4.0], requires_grad=True)
    y = x * x  # both slots are the same parent
    y.sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


def test_repeated_backward_accumulates_into_grad():
    x = Tensor([1.0, 2.0], requires_grad=True)
    (x * x).sum().backward()
    first = x.grad.copy()
    (x * x).sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * first)


def test_zero_grads_resets():
    x = Tensor([1.0], requires_grad=True)
    (x * x).sum().backward()
    zero_grads([x])
    assert x.grad is None


def test_detach_cuts_graph():
    x = Tensor([1.0, 2.0], requires_grad=True)
    d = x.detach()
    assert not d.requires_grad
    y = (x * 2.0 + d).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, [2.0, 2.0])


def test_broadcast_add_unbroadcasts_gradient():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((1, 3)), requires_grad=True)
    s = Tensor(2.0, requires_grad=True)
    ((x + b) * s).sum().backward()
    assert x.grad.shape == (2, 3)
    assert b.grad.shape == (1, 3)
    np.testing.assert_allclose(b.grad, np.full((1, 3), 4.0))
    np.testing.assert_allclose(s.grad, 12.0)


def test_division_gradients():
    a = Tensor([6.0, 8.0], requires_grad=True)
    b = Tensor([2.0, 4.0], requires_grad=True)
    (a / b).sum().backward()
    np.testing.assert_allclose(a.grad, 1.0 / b.data)
    np.testing.assert_allclose(b.grad, -a.data / b.data**2)


def test_rsub_rdiv_scalars():
    x = Tensor([2.0, 4.0], requires_grad=True)
    np.testing.assert_allclose((1.0 - x).data, [-1.0, -3.0])
    y = (1.0 / x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, -1.0 / x.data**2)


def test_exp_log_sqrt_power_forward():
    x = Tensor([1.0, 4.0])
    np.testing.assert_allclose(x.exp().data, np.exp(x.data))
    np.testing.assert_allclose(x.log().data, np.log(x.data))
    np.testing.assert_allclose(x.sqrt().data, np.sqrt(x.data))
    np.testing.assert_allclose(power(x, 3.0).data, x.data**3)


def test_minimum_const_caps_and_masks_gradient():
    x = Tensor([1.0, 5.0, 2.0], requires_grad=True)
    y = minimum_const(x, 3.0)
    np.testing.assert_allclose(y.data, [1.0, 3.0, 2.0])
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0, 0.0, 1.0])


def test_matmul_shapes_and_errors():
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((3, 4)), requires_grad=True)
    out = matmul(a, b)
    assert out.shape == (2, 4)
    out.sum().backward()
    assert a.grad.shape == (2, 3)
    assert b.grad.shape == (3, 4)
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones(3)), b)
    with pytest.raises(DimensionError):
        matmul(a, Tensor(np.ones((2, 4))))


def test_bmm_matches_numpy():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 2, 3))
    b = rng.standard_normal((4, 3, 5))
    out = bmm(Tensor(a), Tensor(b))
    np.testing.assert_allclose(out.data, a @ b)
    with pytest.raises(DimensionError):
        bmm(Tensor(a), Tensor(np.ones((3, 3, 5))))


def test_concat_narrow_round_trip():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(np.arange(6.0, 12.0).reshape(2, 3), requires_grad=True)
    joined = concat([a, b], axis=0)
    assert joined.shape == (4, 3)
    back = narrow(joined, 0, 0, 2)
    np.testing.assert_array_equal(back.data, a.data)
    # gradient lands only in the selected slice
    narrow(joined, 0, 2, 4).sum().backward()
    np.testing.assert_allclose(a.grad, np.zeros((2, 3)))
    np.testing.assert_allclose(b.grad, np.ones((2, 3)))


def test_sum_axis_keepdims_and_mean():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    s = x.sum(axis=1, keepdims=True)
    assert s.shape == (3, 1)
    np.testing.assert_allclose(s.data, x.data.sum(axis=1, keepdims=True))
    m = x.mean(axis=0)
    np.testing.assert_allclose(m.data, x.data.mean(axis=0))
    m.sum().backward()
    np.testing.assert_allclose(x.grad, np.full((3, 4), 1.0 / 3.0))


def test_reshape_swapaxes_gradients():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    y = x.reshape((3, 2)).swapaxes(0, 1)
    assert y.shape == (2, 3)
    (y * y).sum().backward()
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


def test_neg_and_scalar_ops():
    x = Tensor([1.0, -2.0], requires_grad=True)
    ((-x) * 3.0 + 1.0).sum().backward()
    np.testing.assert_allclose(x.grad, [-3.0, -3.0])


def test_default_dtype_switch():
    assert default_dtype() == np.float64
    set_default_dtype("float32")
    try:
        assert Tensor([1.0]).data.dtype == np.float32
    finally:
        set_default_dtype("float64")
    assert Tensor([1.0]).data.dtype == np.float64
    with pytest.raises(Exception):
        set_default_dtype("int8")


def test_gradient_flows_through_long_chain():
    x = Tensor(0.5, requires_grad=True)
    y = x
    for _ in range(50):
        y = y * 1.01
    y.backward()
    np.testing.assert_allclose(x.grad, 1.01**50)

"""AdamW: decoupled decay semantics checked against a hand-rolled reference."""

import numpy as np
import pytest

from mvts.errors import ConfigError, UsageError
from mvts.optim import adamw_step, init_adamw
from mvts.tensor import Tensor


def test_first_step_spot_value():
    # theta=1, g=0.5, defaults lr=1e-3, wd=1e-2:
    # m_hat=0.5, v_hat=0.25, update = lr*(0.5/(0.5+1e-8) + 0.01*1)
    p = Tensor(np.array([1.0]), requires_grad=True)
    state = init_adamw([p])
    adamw_step([p], [np.array([0.5])], state)
    expected = 1.0 - 1e-3 * (0.5 / (np.sqrt(0.25) + 1e-8) + 1e-2 * 1.0)
    np.testing.assert_allclose(p.data, expected, rtol=0, atol=0)
    assert round(float(p.data[0]), 6) == 0.998990


def test_decay_uses_pre_update_parameter():
    # zero gradient: the only movement is -lr*wd*theta, exactly
    p = Tensor(np.array([2.0]), requires_grad=True)
    state = init_adamw([p], lr=0.1, weight_decay=0.5)
    adamw_step([p], [np.array([0.0])], state)
    np.testing.assert_allclose(p.data, [2.0 - 0.1 * 0.5 * 2.0])


def test_trajectory_matches_reference_implementation():
    rng = np.random.default_rng(0)
    theta = rng.standard_normal(5)
    grads = [rng.standard_normal(5) for _ in range(4)]

    lr, b1, b2, eps, wd = 3e-3, 0.9, 0.999, 1e-8, 0.04
    ref = theta.copy()
    m = np.zeros(5)
    v = np.zeros(5)
    for step, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**step)
        v_hat = v / (1 - b2**step)
        ref = ref - lr * (m_hat / (np.sqrt(v_hat) + eps) + wd * ref)

    p = Tensor(theta.copy(), requires_grad=True)
    state = init_adamw([p], lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=wd)
    for g in grads:
        adamw_step([p], [g], state)
    np.testing.assert_allclose(p.data, ref, atol=1e-15)
    assert state.step_count == 4


def test_state_tracks_each_parameter_separately():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    state = init_adamw([a, b])
    adamw_step([a, b], [np.ones(2), np.zeros(3)], state)
    assert state.first_moment[0].shape == (2,)
    assert state.first_moment[1].shape == (3,)
    assert state.first_moment[1].max() == 0.0


def test_step_errors():
    p = Tensor(np.ones(2), requires_grad=True)
    state = init_adamw([p])
    with pytest.raises(UsageError):
        adamw_step([p], [], state)
    with pytest.raises(UsageError):
        adamw_step([p], [None], state)


def test_init_validates_hyperparameters():
    p = Tensor(np.ones(1), requires_grad=True)
    with pytest.raises(ConfigError):
        init_adamw([p], lr=0.0)
    with pytest.raises(ConfigError):
        init_adamw([p], beta1=1.0)
    with pytest.raises(ConfigError):
        init_adamw([p], beta2=-0.1)
    with pytest.raises(ConfigError):
        init_adamw([p], weight_decay=-1.0)
    with pytest.raises(ConfigError):
        init_adamw([p], eps=0.0)


def test_defaults():
    p = Tensor(np.ones(1), requires_grad=True)
    state = init_adamw([p])
    assert (state.lr, state.beta1, state.beta2) == (1e-3, 0.9, 0.999)
    assert (state.eps, state.weight_decay) == (1e-8, 1e-2)
    assert state.step_count == 0

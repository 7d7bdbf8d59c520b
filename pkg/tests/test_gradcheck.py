"""Finite-difference machinery: it passes on real ops and catches planted bugs."""

import numpy as np

from mvts.gradcheck import (
    GRAD_TOL,
    OP_CHECKS,
    check_gradients,
    numerical_gradient,
    relative_error,
    run_gradient_suite,
    run_oracle_suite,
)
from mvts.tensor import Tensor, _wrap


def test_relative_error_scales():
    assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
    assert abs(relative_error(np.array([2.0]), np.array([1.0])) - 0.5) < 1e-12
    # tiny denominators are floored, so absolute noise stays bounded
    assert relative_error(np.array([1e-9]), np.array([0.0])) < 1e-2


def test_numerical_gradient_on_quadratic():
    x = np.array([1.0, -2.0, 3.0])

    def f(t):
        return (t * t).sum()

    (num,) = numerical_gradient(f, [x])
    np.testing.assert_allclose(num, 2.0 * x, atol=1e-8)
    # the probe restores its input
    np.testing.assert_array_equal(x, [1.0, -2.0, 3.0])


def test_check_gradients_accepts_correct_backward():
    rng = np.random.default_rng(0)
    arrays = [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]

    def f(a, b):
        return (a * b).sum()

    assert check_gradients(f, arrays) < GRAD_TOL


def test_check_gradients_flags_planted_bug():
    # exp forward with a deliberately wrong backward rule
    def broken_exp(t: Tensor) -> Tensor:
        return _wrap(np.exp(t.data), (t,), lambda g: (g * np.cos(t.data),))

    def f(a: Tensor):
        return broken_exp(a).sum()

    err = check_gradients(f, [np.random.default_rng(1).standard_normal(5)])
    assert err > 1e-2


def test_suite_covers_every_registered_op_and_passes():
    results = run_gradient_suite(seed=0, instances=3)
    names = {r.name for r in results}
    assert names == set(OP_CHECKS)
    assert all(r.passed for r in results), [r.name for r in results if not r.passed]


def test_suite_is_deterministic_for_a_seed():
    a = run_gradient_suite(seed=5, instances=2)
    b = run_gradient_suite(seed=5, instances=2)
    assert [(r.name, r.max_error) for r in a] == [(r.name, r.max_error) for r in b]


def test_oracle_suite_small_run():
    results = run_oracle_suite(seed=0, instances=10)
    assert {r.name for r in results} == {"nt_xent_oracle", "ts2vec_oracle", "cocoa_oracle"}
    assert all(r.passed for r in results)

"""Finite-difference verification of every differentiable op.

Each registry entry builds one random instance, runs the analytic backward
pass, and compares against central differences. Inputs for ops with kinks
(relu, max pooling) are nudged away from the kink so the two-sided difference
does not straddle it.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ops
from .errors import UsageError
from .tensor import Array, Tensor, concat, narrow

FD_STEP = 1e-5
GRAD_TOL = 1e-4
ORACLE_TOL = 1e-9
DEFAULT_INSTANCES = 20


def relative_error(analytic: Array, numeric: Array) -> float:
    """Max over elements of |a - n| / max(|a|, |n|, 1e-6)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
    return float(np.max(np.abs(a - n) / denom))


def numerical_gradient(f: Callable[..., Tensor], arrays: list[Array], h: float = FD_STEP) -> list[Array]:
    """Central-difference gradient of scalar f with respect to each array."""
    grads = []
    for a in arrays:
        num = np.zeros_like(a)
        flat = a.reshape(-1)
        nflat = num.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            fp = f(*[Tensor(x) for x in arrays]).item()
            flat[j] = orig - h
            fm = f(*[Tensor(x) for x in arrays]).item()
            flat[j] = orig
            nflat[j] = (fp - fm) / (2.0 * h)
        grads.append(num)
    return grads


def check_gradients(f: Callable[..., Tensor], arrays: list[Array], h: float = FD_STEP) -> float:
    """Max relative error between analytic and numeric gradients of scalar f."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = f(*tensors)
    out.backward()
    numeric = numerical_gradient(f, arrays, h=h)
    worst = 0.0
    for t, num in zip(tensors, numeric):
        analytic = t.grad if t.grad is not None else np.zeros_like(num)
        worst = max(worst, relative_error(analytic, num))
    return worst


# ---------------------------------------------------------------------------
# Random-instance builders.


def _weights(rng: np.random.Generator, shape) -> Array:
    """Fixed random output weighting so the scalar mixes all output elements."""
    return rng.standard_normal(shape)


def _away_from(x: Array, point: float, margin: float) -> Array:
    close = np.abs(x - point) < margin
    shift = np.where(x >= point, margin, -margin)
    return np.where(close, x + 2.0 * shift, x)


def _pool_separated(rng: np.random.Generator, shape, kernel: int, stride: int) -> Array:
    """Sample [N, C, T] whose pooling windows have a clear unique max."""
    for _ in range(100):
        x = rng.standard_normal(shape)
        t = shape[-1]
        k = min(kernel, t)
        t_out = 1 if t < kernel else (t - k) // stride + 1
        ok = True
        for j in range(t_out):
            lo = j * stride if t >= kernel else 0
            win = x[..., lo : lo + k].reshape(-1, k)
            top2 = np.sort(win, axis=-1)[:, -2:]
            if k > 1 and np.min(top2[:, 1] - top2[:, 0]) < 1e-2:
                ok = False
                break
        if ok:
            return x
    raise UsageError("could not sample a tie-free pooling instance")


def _hierarchy_separated(rng: np.random.Generator, shape) -> Array:
    """Sample [N, L, T] so every max-pool level of the hierarchy is tie-free."""
    for _ in range(100):
        x = rng.standard_normal(shape)
        cur = x
        ok = True
        while cur.shape[-1] > 1:
            t = cur.shape[-1]
            t_out = (t - 2) // 2 + 1
            gaps = []
            for j in range(t_out):
                win = cur[..., 2 * j : 2 * j + 2].reshape(-1, 2)
                gaps.append(np.min(np.abs(win[:, 1] - win[:, 0])))
            if min(gaps) < 1e-2:
                ok = False
                break
            nxt = np.empty(cur.shape[:-1] + (t // 2,))
            for j in range(t // 2):
                nxt[..., j] = cur[..., 2 * j : 2 * j + 2].max(axis=-1)
            cur = nxt
        if ok:
            return x
    raise UsageError("could not sample a tie-free hierarchy instance")


# ---------------------------------------------------------------------------
# Registry. Each entry: rng -> max relative error for one random instance.


def _check_add(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x, y: ((x + y) * Tensor(w)).sum(), [a, b])


def _check_add_broadcast(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((1, 4))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x, y: ((x + y) * Tensor(w)).sum(), [a, b])


def _check_sub(rng):
    a, b = rng.standard_normal((2, 5)), rng.standard_normal((2, 5))
    w = _weights(rng, (2, 5))
    return check_gradients(lambda x, y: ((x - y) * Tensor(w)).sum(), [a, b])


def _check_mul(rng):
    a, b = rng.standard_normal((4, 3)), rng.standard_normal((4, 1))
    w = _weights(rng, (4, 3))
    return check_gradients(lambda x, y: ((x * y) * Tensor(w)).sum(), [a, b])


def _check_div(rng):
    a = rng.standard_normal((3, 3))
    b = np.sign(rng.standard_normal((3, 3))) * (0.5 + rng.random((3, 3)))
    w = _weights(rng, (3, 3))
    return check_gradients(lambda x, y: ((x / y) * Tensor(w)).sum(), [a, b])


def _check_neg(rng):
    a = rng.standard_normal((2, 3))
    w = _weights(rng, (2, 3))
    return check_gradients(lambda x: ((-x) * Tensor(w)).sum(), [a])


def _check_exp(rng):
    a = rng.standard_normal((3, 4)) * 0.5
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: (x.exp() * Tensor(w)).sum(), [a])


def _check_log(rng):
    a = 0.5 + rng.random((3, 4))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: (x.log() * Tensor(w)).sum(), [a])


def _check_sqrt(rng):
    a = 0.5 + rng.random((3, 4))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: (x.sqrt() * Tensor(w)).sum(), [a])


def _check_power(rng):
    a = 0.5 + rng.random((3, 4))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: ((x**2.7) * Tensor(w)).sum(), [a])


def _check_minimum_const(rng):
    from .tensor import minimum_const

    a = _away_from(rng.standard_normal((3, 4)), 0.5, 0.05)
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: (minimum_const(x, 0.5) * Tensor(w)).sum(), [a])


def _check_matmul(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    w = _weights(rng, (3, 2))
    return check_gradients(lambda x, y: ((x @ y) * Tensor(w)).sum(), [a, b])


def _check_bmm(rng):
    from .tensor import bmm

    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 4, 2))
    w = _weights(rng, (2, 3, 2))
    return check_gradients(lambda x, y: (bmm(x, y) * Tensor(w)).sum(), [a, b])


def _check_reshape(rng):
    a = rng.standard_normal((2, 6))
    w = _weights(rng, (3, 4))
    return check_gradients(lambda x: (x.reshape((3, 4)) * Tensor(w)).sum(), [a])


def _check_swapaxes(rng):
    a = rng.standard_normal((2, 3, 4))
    w = _weights(rng, (4, 3, 2))
    return check_gradients(lambda x: (x.swapaxes(0, 2) * Tensor(w)).sum(), [a])


def _check_concat(rng):
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((4, 3))
    w = _weights(rng, (6, 3))
    return check_gradients(lambda x, y: (concat([x, y], axis=0) * Tensor(w)).sum(), [a, b])


def _check_narrow(rng):
    a = rng.standard_normal((3, 6))
    w = _weights(rng, (3, 3))
    return check_gradients(lambda x: (narrow(x, 1, 2, 5) * Tensor(w)).sum(), [a])


def _check_sum(rng):
    a = rng.standard_normal((3, 4, 2))
    axis = int(rng.integers(0, 3))
    shape = tuple(s for i, s in enumerate(a.shape) if i != axis)
    w = _weights(rng, shape)
    return check_gradients(lambda x: (x.sum(axis=axis) * Tensor(w)).sum(), [a])


def _check_mean(rng):
    a = rng.standard_normal((3, 4))
    w = _weights(rng, (3, 1))
    return check_gradients(lambda x: (x.mean(axis=1, keepdims=True) * Tensor(w)).sum(), [a])


def _check_relu(rng):
    a = _away_from(rng.standard_normal((3, 5)), 0.0, 0.05)
    w = _weights(rng, (3, 5))
    return check_gradients(lambda x: (ops.relu(x) * Tensor(w)).sum(), [a])


def _check_gelu(rng):
    a = rng.standard_normal((3, 5))
    w = _weights(rng, (3, 5))
    return check_gradients(lambda x: (ops.gelu(x) * Tensor(w)).sum(), [a])


def _check_dropout(rng):
    a = rng.standard_normal((4, 5))
    w = _weights(rng, (4, 5))
    seed = int(rng.integers(0, 2**31))

    def f(x):
        mask_rng = np.random.default_rng(seed)
        return (ops.dropout(x, 0.3, train=True, rng=mask_rng) * Tensor(w)).sum()

    return check_gradients(f, [a])


def _check_linear(rng):
    x = rng.standard_normal((2, 3, 5))
    wgt = rng.standard_normal((5, 4))
    b = rng.standard_normal(4)
    w = _weights(rng, (2, 3, 4))
    return check_gradients(lambda a, p, q: (ops.linear(a, p, q) * Tensor(w)).sum(), [x, wgt, b])


def _check_conv1d(rng):
    x = rng.standard_normal((2, 3, 8))
    k = rng.standard_normal((4, 3, 3))
    w = _weights(rng, (2, 4, 4))
    return check_gradients(
        lambda a, b: (ops.conv1d(a, b, stride=2, padding=1) * Tensor(w)).sum(), [x, k]
    )


def _check_maxpool1d(rng):
    x = _pool_separated(rng, (2, 3, 7), kernel=3, stride=2)
    w = _weights(rng, (2, 3, 3))
    return check_gradients(lambda a: (ops.maxpool1d(a, 3, 2) * Tensor(w)).sum(), [x])


def _check_maxpool1d_short(rng):
    x = _pool_separated(rng, (2, 3, 2), kernel=4, stride=2)
    w = _weights(rng, (2, 3, 1))
    return check_gradients(lambda a: (ops.maxpool1d(a, 4, 2) * Tensor(w)).sum(), [x])


def _check_avgpool1d(rng):
    x = rng.standard_normal((2, 3, 9))
    w = _weights(rng, (2, 3, 3))
    return check_gradients(lambda a: (ops.avgpool1d(a, [0, 3, 6, 9]) * Tensor(w)).sum(), [x])


def _check_softmax(rng):
    x = rng.standard_normal((3, 5))
    w = _weights(rng, (3, 5))
    return check_gradients(lambda a: (ops.softmax(a) * Tensor(w)).sum(), [x])


def _check_group_norm(rng):
    x = rng.standard_normal((2, 4, 3))
    scale = 0.5 + rng.random(4)
    shift = rng.standard_normal(4)
    w = _weights(rng, (2, 4, 3))
    return check_gradients(
        lambda a, s, b: (ops.group_norm(a, 2, scale=s, shift=b) * Tensor(w)).sum(),
        [x, scale, shift],
    )


def _check_cosine(rng):
    a = rng.standard_normal((3, 6))
    b = rng.standard_normal((4, 6))
    w = _weights(rng, (3, 4))
    return check_gradients(
        lambda x, y: (ops.scaled_cosine_similarity(x, y, 0.5) * Tensor(w)).sum(), [a, b]
    )


def _check_nt_xent_pair(rng):
    from .losses import nt_xent_pair

    n, d = int(rng.integers(2, 5)), int(rng.integers(3, 8))
    a, b = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    return check_gradients(lambda x, y: nt_xent_pair(x, y, 0.5), [a, b])


def _check_nt_xent(rng):
    from .losses import nt_xent

    n, d = 3, 4
    views = [rng.standard_normal((n, 2, d)) for _ in range(3)]
    return check_gradients(lambda *vs: nt_xent(list(vs), 0.5), views)


def _check_ts2vec_dual(rng):
    from .losses import ts2vec_dual

    n, l, t = int(rng.integers(2, 4)), 3, int(rng.integers(2, 5))
    a, b = rng.standard_normal((n, l, t)), rng.standard_normal((n, l, t))
    return check_gradients(lambda x, y: ts2vec_dual(x, y), [a, b])


def _check_ts2vec(rng):
    from .losses import ts2vec

    n, l, t = 2, 3, 4
    a = _hierarchy_separated(rng, (n, l, t))
    b = _hierarchy_separated(rng, (n, l, t))
    return check_gradients(lambda x, y: ts2vec([x, y]), [a, b])


def _check_cocoa(rng):
    from .losses import cocoa

    n, d = 3, 5
    views = [rng.standard_normal((n, 2, 3)) for _ in range(3)]
    return check_gradients(lambda *vs: cocoa(list(vs), 0.5, 1.0), views)


OP_CHECKS: dict[str, Callable[[np.random.Generator], float]] = {
    "add": _check_add,
    "add_broadcast": _check_add_broadcast,
    "sub": _check_sub,
    "mul": _check_mul,
    "div": _check_div,
    "neg": _check_neg,
    "exp": _check_exp,
    "log": _check_log,
    "sqrt": _check_sqrt,
    "power": _check_power,
    "minimum_const": _check_minimum_const,
    "matmul": _check_matmul,
    "bmm": _check_bmm,
    "reshape": _check_reshape,
    "swapaxes": _check_swapaxes,
    "concat": _check_concat,
    "narrow": _check_narrow,
    "sum": _check_sum,
    "mean": _check_mean,
    "relu": _check_relu,
    "gelu": _check_gelu,
    "dropout": _check_dropout,
    "linear": _check_linear,
    "conv1d": _check_conv1d,
    "maxpool1d": _check_maxpool1d,
    "maxpool1d_short": _check_maxpool1d_short,
    "avgpool1d": _check_avgpool1d,
    "softmax": _check_softmax,
    "group_norm": _check_group_norm,
    "scaled_cosine_similarity": _check_cosine,
    "nt_xent_pair": _check_nt_xent_pair,
    "nt_xent": _check_nt_xent,
    "ts2vec_dual": _check_ts2vec_dual,
    "ts2vec": _check_ts2vec,
    "cocoa": _check_cocoa,
}


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def run_gradient_suite(seed: int = 0, instances: int = DEFAULT_INSTANCES) -> list[CheckResult]:
    """Run every registered op check over fresh random instances."""
    results = []
    for name, fn in OP_CHECKS.items():
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        worst = max(fn(rng) for _ in range(instances))
        results.append(CheckResult(name, worst, GRAD_TOL))
    return results


def run_oracle_suite(seed: int = 0, instances: int = 100) -> list[CheckResult]:
    """Compare batched losses against the loop-based reference implementations."""
    from . import loss_oracles, losses

    rng = np.random.default_rng(seed)
    pairs = [
        ("nt_xent_oracle", losses.nt_xent, loss_oracles.nt_xent, dict(tau=0.7)),
        ("ts2vec_oracle", losses.ts2vec, loss_oracles.ts2vec, {}),
        ("cocoa_oracle", losses.cocoa, loss_oracles.cocoa, dict(tau=0.7, lam=0.5)),
    ]
    results = []
    for name, batched, naive, kwargs in pairs:
        worst = 0.0
        for _ in range(instances):
            n = int(rng.integers(1, 5))
            v = int(rng.integers(2, 4))
            t = int(rng.integers(1, 5))
            l = int(rng.integers(1, 7))
            views = [rng.standard_normal((n, l, t)) for _ in range(v)]
            got = batched([Tensor(z) for z in views], **kwargs).item()
            want = naive(views, **kwargs)
            denom = max(abs(got), abs(want), 1e-6)
            worst = max(worst, abs(got - want) / denom)
        results.append(CheckResult(name, worst, ORACLE_TOL))
    return results

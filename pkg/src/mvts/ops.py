"""Neural-network operations built on the autodiff core.

Forward passes of ``linear`` and ``conv1d`` process one sample at a time so
the arithmetic applied to a sample never depends on how many other samples
share the batch. BLAS kernels pick different accumulation orders for
different matrix shapes, and a per-sample loop pins the shape; this is what
makes eval-mode encoding bitwise reproducible across batch compositions.
Backward passes are batched (training never needs that guarantee).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import ndtr

from .errors import ConfigError, DimensionError, UsageError
from .tensor import Array, Tensor, _wrap

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def relu(x: Tensor) -> Tensor:
    data = np.maximum(x.data, 0.0)
    mask = (x.data > 0.0).astype(x.data.dtype)
    return _wrap(data, (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF form: x * Phi(x).

    The derivative term is built lazily so eval-only forwards skip one exp
    over the activation.
    """
    xd = x.data
    cdf = ndtr(xd)

    def backward(g: Array):
        pdf = np.exp(-0.5 * xd * xd) * _INV_SQRT_2PI
        return (g * (cdf + xd * pdf),)

    return _wrap(xd * cdf, (x,), backward)


def dropout(x: Tensor, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: keep with prob 1-rate, scale kept values by 1/(1-rate).

    Eval mode (or rate 0) returns the input tensor unchanged, so eval outputs
    are bitwise independent of the dropout configuration.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise UsageError("dropout in train mode needs an rng")
    # Single-precision draws are enough to compare against the keep rate.
    keep = (rng.random(x.shape, dtype=np.float32) >= rate).astype(x.data.dtype)
    mask = keep / (1.0 - rate)
    return _wrap(x.data * mask, (x,), lambda g: (g * mask,))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: out[..., j] = sum_k x[..., k] w[k, j] + b[j].

    The forward pass loops over axis 0 so each sample's product has a fixed
    shape regardless of batch size.
    """
    if x.ndim < 2:
        raise DimensionError(f"linear expects at least 2-D input, got {x.shape}")
    if weight.ndim != 2:
        raise DimensionError(f"linear weight must be 2-D, got {weight.shape}")
    d_in, d_out = weight.shape
    if x.shape[-1] != d_in:
        raise DimensionError(f"linear input dim {x.shape[-1]} != weight rows {d_in}")
    if bias is not None and bias.shape != (d_out,):
        raise DimensionError(f"linear bias shape {bias.shape} != ({d_out},)")

    n = x.shape[0]
    out = np.empty(x.shape[:-1] + (d_out,), dtype=x.data.dtype)
    b = bias.data if bias is not None else None
    for i in range(n):
        prod = x.data[i] @ weight.data
        out[i] = prod + b if b is not None else prod

    def backward(g: Array):
        g2 = g.reshape(-1, d_out)
        x2 = x.data.reshape(-1, d_in)
        gx = (g2 @ weight.data.T).reshape(x.shape)
        gw = x2.T @ g2
        gb = g2.sum(axis=0) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _wrap(out, parents, backward)


def conv_output_len(t_in: int, kernel: int, stride: int, padding: int) -> int:
    """Length after a valid strided convolution; raises if no window fits."""
    if t_in + 2 * padding < kernel:
        raise ConfigError(
            f"input length {t_in} with padding {padding} is shorter than kernel {kernel}"
        )
    return (t_in + 2 * padding - kernel) // stride + 1


def conv1d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of [N, C_in, T] with kernels [C_out, C_in, k].

    Zero padding on both ends; windows that would overrun the padded input are
    dropped (valid convolution over the padded signal). Bias-free; add one
    separately if needed.
    """
    if x.ndim != 3:
        raise DimensionError(f"conv1d expects [N, C, T] input, got {x.shape}")
    if weight.ndim != 3:
        raise DimensionError(f"conv1d expects [C_out, C_in, k] kernels, got {weight.shape}")
    n, c_in, t = x.shape
    c_out, c_k, k = weight.shape
    if c_in != c_k:
        raise DimensionError(f"conv1d channel mismatch: input has {c_in}, kernels expect {c_k}")
    if stride < 1 or padding < 0:
        raise ConfigError(f"conv1d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    t_out = conv_output_len(t, k, stride, padding)

    if padding:
        xp = np.zeros((n, c_in, t + 2 * padding), dtype=x.data.dtype)
        xp[:, :, padding : padding + t] = x.data
    else:
        xp = x.data
    sn, sc, st = xp.strides
    windows = as_strided(xp, shape=(n, t_out, c_in, k), strides=(sn, st * stride, sc, st))
    # One contiguous copy; everything after is per-sample.
    cols = np.ascontiguousarray(windows).reshape(n, t_out, c_in * k)
    w_mat = weight.data.reshape(c_out, c_in * k).T

    out = np.empty((n, c_out, t_out), dtype=x.data.dtype)
    for i in range(n):
        out[i] = (cols[i] @ w_mat).T

    def backward(g: Array):
        g2 = np.ascontiguousarray(np.swapaxes(g, 1, 2)).reshape(n * t_out, c_out)
        cols2 = cols.reshape(n * t_out, c_in * k)
        gw = (cols2.T @ g2).T.reshape(c_out, c_in, k)
        gcols = (g2 @ w_mat.T).reshape(n, t_out, c_in, k)
        gct = np.swapaxes(gcols, 1, 2)  # [n, c_in, t_out, k]
        gxp = np.zeros((n, c_in, t + 2 * padding), dtype=g.dtype)
        # One strided accumulation per kernel offset; offsets within a pass
        # never collide, so no scatter-add is needed.
        for r in range(k):
            gxp[:, :, r : r + stride * t_out : stride] += gct[..., r]
        gx = gxp[:, :, padding : padding + t] if padding else gxp
        return (gx, gw)

    return _wrap(out, (x, weight), backward)


def maxpool1d(x: Tensor, kernel: int, stride: int) -> Tensor:
    """Max over sliding windows along the last axis of [N, C, T].

    When T < kernel the whole extent collapses into a single window, so short
    inputs still produce one output step. Ties take the earliest position.
    """
    if x.ndim != 3:
        raise DimensionError(f"maxpool1d expects [N, C, T] input, got {x.shape}")
    if kernel < 1 or stride < 1:
        raise ConfigError(f"maxpool1d needs kernel >= 1 and stride >= 1, got {kernel}, {stride}")
    n, c, t = x.shape
    if t < kernel:
        kernel = t
        t_out = 1
    else:
        t_out = (t - kernel) // stride + 1
    sn, sc, st = x.data.strides
    windows = as_strided(x.data, shape=(n, c, t_out, kernel), strides=(sn, sc, st * stride, st))
    arg = windows.argmax(axis=-1)
    data = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def backward(g: Array):
        gx = np.zeros_like(x.data)
        pos = stride * np.arange(t_out)[None, None, :] + arg
        nn = np.arange(n)[:, None, None]
        cc = np.arange(c)[None, :, None]
        np.add.at(gx, (nn, cc, pos), g)
        return (gx,)

    return _wrap(np.ascontiguousarray(data), (x,), backward)


def avgpool1d(x: Tensor, boundaries) -> Tensor:
    """Mean over explicit bins [b_i, b_{i+1}) along the last axis of [N, C, T]."""
    if x.ndim != 3:
        raise DimensionError(f"avgpool1d expects [N, C, T] input, got {x.shape}")
    bounds = [int(b) for b in boundaries]
    t = x.shape[-1]
    if len(bounds) < 2:
        raise ConfigError("avgpool1d needs at least two bin boundaries")
    if bounds[0] < 0 or bounds[-1] > t:
        raise ConfigError(f"bin boundaries {bounds} fall outside [0, {t}]")
    if any(b1 >= b2 for b1, b2 in zip(bounds, bounds[1:])):
        raise ConfigError(f"bin boundaries must be strictly increasing, got {bounds}")
    n, c, _ = x.shape
    t_out = len(bounds) - 1
    out = np.empty((n, c, t_out), dtype=x.data.dtype)
    for j in range(t_out):
        out[:, :, j] = x.data[:, :, bounds[j] : bounds[j + 1]].mean(axis=-1)

    def backward(g: Array):
        gx = np.zeros_like(x.data)
        for j in range(t_out):
            width = bounds[j + 1] - bounds[j]
            gx[:, :, bounds[j] : bounds[j + 1]] += g[:, :, j : j + 1] / width
        return (gx,)

    return _wrap(out, (x,), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by the row max (a constant)."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g: Array):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return (data * (g - dot),)

    return _wrap(data, (x,), backward)


def group_norm(
    x: Tensor,
    num_groups: int,
    eps: float = 1e-5,
    scale: Tensor | None = None,
    shift: Tensor | None = None,
) -> Tensor:
    """Normalize [N, C, T] per sample over channel groups (biased variance).

    Fused into a single node: the graph keeps only the normalized values and
    the per-group std, which matters because this sits inside every encoder
    block.
    """
    if x.ndim != 3:
        raise DimensionError(f"group_norm expects [N, C, T] input, got {x.shape}")
    n, c, t = x.shape
    if num_groups < 1 or c % num_groups != 0:
        raise ConfigError(f"channel count {c} is not divisible by num_groups {num_groups}")
    m = (c // num_groups) * t
    grouped = x.data.reshape(n, num_groups, m)
    mu = grouped.mean(axis=2, keepdims=True)
    centered = grouped - mu
    std = np.sqrt((centered * centered).mean(axis=2, keepdims=True) + eps)
    xhat = (centered / std).reshape(n, c, t)

    gamma = None if scale is None else scale.data.reshape(1, c, 1)
    out = xhat if gamma is None else xhat * gamma
    if shift is not None:
        out = out + shift.data.reshape(1, c, 1)

    parents = [x]
    if scale is not None:
        parents.append(scale)
    if shift is not None:
        parents.append(shift)

    def backward(g: Array):
        a = g if gamma is None else g * gamma
        ag = a.reshape(n, num_groups, m)
        xg = xhat.reshape(n, num_groups, m)
        gx = (
            ag - ag.mean(axis=2, keepdims=True) - xg * (ag * xg).mean(axis=2, keepdims=True)
        ) / std
        grads = [gx.reshape(n, c, t)]
        if scale is not None:
            grads.append((g * xhat).sum(axis=(0, 2)).reshape(scale.shape))
        if shift is not None:
            grads.append(g.sum(axis=(0, 2)).reshape(shift.shape))
        return tuple(grads)

    return _wrap(out, tuple(parents), backward)


def scaled_cosine_similarity(a: Tensor, b: Tensor, tau: float, eps: float = 1e-12) -> Tensor:
    """All-pairs cosine similarity of rows, divided by temperature tau.

    Returns [N, M] for inputs [N, D] and [M, D]. Norms are floored by eps so
    zero rows stay finite.
    """
    if tau <= 0.0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"cosine similarity expects 2-D inputs, got {a.shape}, {b.shape}")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape} vs {b.shape}")
    dots = a @ b.swapaxes(0, 1)
    na = (a * a).sum(axis=1, keepdims=True).sqrt() + eps
    nb = (b * b).sum(axis=1, keepdims=True).sqrt() + eps
    denom = (na * nb.reshape((1, b.shape[0]))) * tau
    return dots / denom

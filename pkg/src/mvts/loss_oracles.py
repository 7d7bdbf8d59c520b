"""Loop-based reference implementations of the contrastive losses.

Everything here is written as literal sums over plain numpy arrays with no
batching, masking, or numerical stabilization, so the batched versions in
``losses`` can be tested against an independent route. Inputs are [N, L, T]
arrays, one per view, matching the batched API.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

Array = np.ndarray


def _cos(a: Array, b: Array) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def _flatten_views(views: list[Array]) -> list[Array]:
    return [np.asarray(v, dtype=np.float64).reshape(v.shape[0], -1) for v in views]


def nt_xent_pair(zw: Array, zv: Array, tau: float) -> float:
    zw = np.asarray(zw, dtype=np.float64).reshape(zw.shape[0], -1)
    zv = np.asarray(zv, dtype=np.float64).reshape(zv.shape[0], -1)
    n = zw.shape[0]
    total = 0.0
    for i in range(n):
        num = math.exp(_cos(zw[i], zv[i]) / tau)
        den = 0.0
        for j in range(n):
            den += math.exp(_cos(zw[i], zv[j]) / tau)
        for j in range(n):
            if j != i:
                den += math.exp(_cos(zw[i], zw[j]) / tau)
        total += math.log(num / den)
    return -total / n


def nt_xent(views: list[Array], tau: float) -> float:
    flat = _flatten_views(views)
    v = len(flat)
    if v < 2:
        raise ConfigError("need at least 2 views")
    total = 0.0
    for w in range(v):
        for u in range(v):
            if u != w:
                total += nt_xent_pair(flat[w], flat[u], tau)
    return total / (v * (v - 1))


def ts2vec_dual(zw: Array, zv: Array) -> float:
    """zw, zv are [N, T, L]; raw dot products over L."""
    zw = np.asarray(zw, dtype=np.float64)
    zv = np.asarray(zv, dtype=np.float64)
    n, t, _ = zw.shape
    total = 0.0
    if t > 1:
        for i in range(n):
            for s in range(t):
                num = math.exp(float(np.dot(zw[i, s], zv[i, s])))
                den = 0.0
                for s2 in range(t):
                    den += math.exp(float(np.dot(zw[i, s], zv[i, s2])))
                for s2 in range(t):
                    if s2 != s:
                        den += math.exp(float(np.dot(zw[i, s], zw[i, s2])))
                total += math.log(num / den)
    if n > 1:
        for i in range(n):
            for s in range(t):
                num = math.exp(float(np.dot(zw[i, s], zv[i, s])))
                den = 0.0
                for j in range(n):
                    den += math.exp(float(np.dot(zw[i, s], zv[j, s])))
                for j in range(n):
                    if j != i:
                        den += math.exp(float(np.dot(zw[i, s], zw[j, s])))
                total += math.log(num / den)
    return -total / (2.0 * n * t)


def _pool_time(z: Array) -> Array:
    """Max over non-overlapping time pairs of [N, T, L]; odd tail dropped."""
    n, t, l = z.shape
    t_out = t // 2
    out = np.empty((n, t_out, l))
    for j in range(t_out):
        out[:, j] = np.maximum(z[:, 2 * j], z[:, 2 * j + 1])
    return out


def ts2vec_hierarchical(zw: Array, zv: Array) -> float:
    levels = []
    cur_w, cur_v = np.asarray(zw, dtype=np.float64), np.asarray(zv, dtype=np.float64)
    while True:
        levels.append(ts2vec_dual(cur_w, cur_v))
        if cur_w.shape[1] == 1:
            break
        cur_w = _pool_time(cur_w)
        cur_v = _pool_time(cur_v)
    return sum(levels) / len(levels)


def ts2vec(views: list[Array]) -> float:
    """Views are [N, L, T]; transposed to [N, T, L] for the pair losses."""
    items = [np.swapaxes(np.asarray(v, dtype=np.float64), 1, 2) for v in views]
    v = len(items)
    if v < 2:
        raise ConfigError("need at least 2 views")
    total = 0.0
    for w in range(v):
        for u in range(v):
            if u != w:
                total += ts2vec_hierarchical(items[w], items[u])
    return total / (v * (v - 1))


def cocoa(views: list[Array], tau: float, lam: float) -> float:
    flat = _flatten_views(views)
    v = len(flat)
    if v < 2:
        raise ConfigError("need at least 2 views")
    n = flat[0].shape[0]
    cross = 0.0
    for i in range(n):
        for w in range(v):
            for u in range(v):
                if u != w:
                    cross += math.exp(1.0 / tau - _cos(flat[w][i], flat[u][i]) / tau)
    disc = 0.0
    for u in range(v):
        inner = 0.0
        for i in range(n):
            for j in range(n):
                if j != i:
                    inner += math.exp(_cos(flat[u][i], flat[u][j]) / tau)
        disc += inner / n
    return cross + lam * disc

"""Contrastive objectives: NT-Xent, TS2Vec (dual + hierarchical), COCOA.

Each loss has a batched implementation here and a loop-based reference in
``loss_oracles``; the two are compared element-for-element in tests. Views
arrive as [N, L, T] tensors (one per view). NT-Xent and COCOA flatten each
view to [N, L*T]; TS2Vec keeps the time axis and takes raw dot products
over L.

Log-sum terms are stabilized by subtracting a constant row max. Excluded
diagonal entries are pushed to -1e9 before the exp so they underflow to an
exact zero instead of being masked after the fact (which could overflow).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, bmm, minimum_const, swapaxes
from . import ops

log = logging.getLogger(__name__)

LOSS_NAMES = ("nt_xent", "ts2vec", "cocoa")

_DIAG_KILL = -1e9
_EXP_CAP = 50.0

_clamp_events = 0


def clamp_event_count() -> int:
    """How many COCOA evaluations hit the exponent cap so far."""
    return _clamp_events


@dataclass
class LossConfig:
    tau: float = 0.5
    lam: float = 1.0
    hierarchy_enabled: bool = True

    def validate(self) -> None:
        if self.tau <= 0.0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")


def compute_loss(name: str, views, config: LossConfig) -> Tensor:
    """Dispatch by loss name using the shared config."""
    config.validate()
    if name == "nt_xent":
        return nt_xent(views, config.tau)
    if name == "ts2vec":
        return ts2vec(views, hierarchy=config.hierarchy_enabled)
    if name == "cocoa":
        return cocoa(views, config.tau, config.lam)
    raise ConfigError(f"unknown loss {name!r}, expected one of {LOSS_NAMES}")


def _view_list(views) -> list[Tensor]:
    items = list(views.views) if hasattr(views, "views") else list(views)
    if len(items) < 2:
        raise ConfigError(f"need at least 2 views, got {len(items)}")
    shape = items[0].shape
    for v in items[1:]:
        if v.shape != shape:
            raise DimensionError(f"views disagree on shape: {shape} vs {v.shape}")
    return items


def _flat(views: list[Tensor]) -> list[Tensor]:
    n = views[0].shape[0]
    return [v.reshape((n, -1)) if v.ndim > 2 else v for v in views]


# ---------------------------------------------------------------------------
# NT-Xent.


def nt_xent_pair(zw: Tensor, zv: Tensor, tau: float) -> Tensor:
    """Mean over anchors i of -ln of the positive's share of the denominator.

    The denominator for anchor i sums exp similarities to every sample of the
    other view (positive included) and to every other sample of the anchor's
    own view.
    """
    if zw.shape != zv.shape:
        raise DimensionError(f"paired views differ in shape: {zw.shape} vs {zv.shape}")
    n = zw.shape[0]
    s_wv = ops.scaled_cosine_similarity(zw, zv, tau)
    s_ww = ops.scaled_cosine_similarity(zw, zw, tau)
    eye = np.eye(n)
    killer = Tensor(_DIAG_KILL * eye)

    own = s_ww.data + _DIAG_KILL * eye
    m = np.maximum(s_wv.data.max(axis=1), own.max(axis=1))[:, None]
    m_t = Tensor(m)

    den = (s_wv - m_t).exp().sum(axis=1) + (s_ww + killer - m_t).exp().sum(axis=1)
    pos = (s_wv * Tensor(eye)).sum(axis=1)
    per_anchor = (pos - m_t.reshape((n,))) - den.log()
    return per_anchor.sum() * (-1.0 / n)


def nt_xent(views, tau: float) -> Tensor:
    """Mean of nt_xent_pair over all ordered view pairs."""
    items = _flat(_view_list(views))
    v = len(items)
    total: Tensor | None = None
    for w in range(v):
        for u in range(v):
            if u == w:
                continue
            term = nt_xent_pair(items[w], items[u], tau)
            total = term if total is None else total + term
    return total * (1.0 / (v * (v - 1)))


# ---------------------------------------------------------------------------
# TS2Vec.


def ts2vec_dual(zw: Tensor, zv: Tensor) -> Tensor:
    """Temporal + instance contrast at one time resolution.

    Inputs are [N, T, L]; similarities are raw dot products over L. The
    temporal term contrasts timestamps within an instance and is dropped when
    T == 1; the instance term contrasts instances within a timestamp and is
    dropped when N == 1. The 1/(2NT) normalizer always uses the full N and T.
    """
    if zw.shape != zv.shape:
        raise DimensionError(f"paired views differ in shape: {zw.shape} vs {zv.shape}")
    if zw.ndim != 3:
        raise DimensionError(f"ts2vec_dual expects [N, T, L], got {zw.shape}")
    n, t, _ = zw.shape
    total: Tensor | None = None

    if t > 1:
        s_wv = bmm(zw, swapaxes(zv, 1, 2))
        s_ww = bmm(zw, swapaxes(zw, 1, 2))
        eye = np.eye(t)
        killer = Tensor(_DIAG_KILL * eye)
        own = s_ww.data + _DIAG_KILL * eye
        m = np.maximum(s_wv.data.max(axis=2), own.max(axis=2))[..., None]
        m_t = Tensor(m)
        den = (s_wv - m_t).exp().sum(axis=2) + (s_ww + killer - m_t).exp().sum(axis=2)
        pos = (s_wv * Tensor(eye)).sum(axis=2)
        lt = (pos - m_t.reshape((n, t))) - den.log()
        total = lt.sum()

    if n > 1:
        zw_t = swapaxes(zw, 0, 1)
        zv_t = swapaxes(zv, 0, 1)
        p_wv = bmm(zw_t, swapaxes(zv_t, 1, 2))
        p_ww = bmm(zw_t, swapaxes(zw_t, 1, 2))
        eye = np.eye(n)
        killer = Tensor(_DIAG_KILL * eye)
        own = p_ww.data + _DIAG_KILL * eye
        m = np.maximum(p_wv.data.max(axis=2), own.max(axis=2))[..., None]
        m_t = Tensor(m)
        den = (p_wv - m_t).exp().sum(axis=2) + (p_ww + killer - m_t).exp().sum(axis=2)
        pos = (p_wv * Tensor(eye)).sum(axis=2)
        li = (pos - m_t.reshape((t, n))) - den.log()
        inst = li.sum()
        total = inst if total is None else total + inst

    if total is None:
        return (zw.sum() + zv.sum()) * 0.0
    return total * (-1.0 / (2.0 * n * t))


def _pool_time(x: Tensor) -> Tensor:
    """Halve the time axis of [N, T, L] with max pooling (kernel 2, stride 2)."""
    return swapaxes(ops.maxpool1d(swapaxes(x, 1, 2), 2, 2), 1, 2)


def ts2vec_hierarchical(zw: Tensor, zv: Tensor) -> Tensor:
    """Mean of the dual loss over successively max-pooled time resolutions.

    Pooling repeats until T reaches 1, where only the instance term remains.
    """
    levels: list[Tensor] = []
    cur_w, cur_v = zw, zv
    while True:
        levels.append(ts2vec_dual(cur_w, cur_v))
        if cur_w.shape[1] == 1:
            break
        cur_w = _pool_time(cur_w)
        cur_v = _pool_time(cur_v)
    total = levels[0]
    for term in levels[1:]:
        total = total + term
    return total * (1.0 / len(levels))


def ts2vec(views, hierarchy: bool = True) -> Tensor:
    """Mean of the (hierarchical) dual loss over all ordered view pairs.

    Views come in as [N, L, T]; the time axis moves to the middle before the
    pair losses.
    """
    raw = _view_list(views)
    for view in raw:
        if view.ndim != 3:
            raise DimensionError(f"ts2vec expects [N, L, T] views, got {view.shape}")
    items = [swapaxes(view, 1, 2) for view in raw]
    pair = ts2vec_hierarchical if hierarchy else ts2vec_dual
    v = len(items)
    total: Tensor | None = None
    for w in range(v):
        for u in range(v):
            if u == w:
                continue
            term = pair(items[w], items[u])
            total = term if total is None else total + term
    return total * (1.0 / (v * (v - 1)))


# ---------------------------------------------------------------------------
# COCOA.


def _capped_exp(x: Tensor) -> Tensor:
    """exp with the exponent clamped at _EXP_CAP; counts and logs clamps."""
    global _clamp_events
    hits = int(np.sum(x.data > _EXP_CAP))
    if hits:
        _clamp_events += hits
        log.warning("cocoa exponent clamped at %g for %d entries", _EXP_CAP, hits)
        return minimum_const(x, _EXP_CAP).exp()
    return x.exp()


def _rowwise_scaled_cosine(a: Tensor, b: Tensor, tau: float, eps: float = 1e-12) -> Tensor:
    dots = (a * b).sum(axis=1)
    na = (a * a).sum(axis=1).sqrt() + eps
    nb = (b * b).sum(axis=1).sqrt() + eps
    return dots / (na * nb * tau)


def cocoa(views, tau: float, lam: float) -> Tensor:
    """Cross-view alignment plus a weighted intra-view discriminator.

    The alignment term sums exp(1/tau - s) over every sample and ordered view
    pair, with no batch mean; the discriminator averages exp similarities of
    distinct same-view samples over the batch, summed across views and scaled
    by lam.
    """
    if tau <= 0.0:
        raise ConfigError(f"tau must be positive, got {tau}")
    if lam < 0.0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    items = _flat(_view_list(views))
    v = len(items)
    n = items[0].shape[0]

    total: Tensor | None = None
    for w in range(v):
        for u in range(v):
            if u == w:
                continue
            s = _rowwise_scaled_cosine(items[w], items[u], tau)
            term = _capped_exp((1.0 / tau) - s).sum()
            total = term if total is None else total + term

    eye = np.eye(n)
    killer = Tensor(_DIAG_KILL * eye)
    disc: Tensor | None = None
    for u in range(v):
        s = ops.scaled_cosine_similarity(items[u], items[u], tau)
        term = _capped_exp(s + killer).sum() * (1.0 / n)
        disc = term if disc is None else disc + term
    return total + disc * lam

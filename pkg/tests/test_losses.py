"""Contrastive losses: closed-form spot values, oracle agreement, symmetries."""

import math

import numpy as np
import pytest

from mvts import loss_oracles
from mvts.errors import ConfigError, DimensionError
from mvts.losses import (
    LossConfig,
    clamp_event_count,
    cocoa,
    compute_loss,
    nt_xent,
    nt_xent_pair,
    ts2vec,
    ts2vec_dual,
    ts2vec_hierarchical,
)
from mvts.tensor import Tensor


def _rand_views(rng, v, n, l, t=None):
    shape = (n, l) if t is None else (n, l, t)
    return [Tensor(rng.standard_normal(shape), requires_grad=True) for _ in range(v)]


# --- closed-form spot values ------------------------------------------------


def test_nt_xent_single_window_is_exactly_zero():
    rng = np.random.default_rng(0)
    for _ in range(5):
        views = _rand_views(rng, 2, 1, 6)
        loss = nt_xent(views, tau=0.5)
        assert loss.item() == 0.0
        loss.backward()  # graph exists; gradients are defined (and zero)
        assert all(np.all(np.isfinite(v.grad)) for v in views)


def test_nt_xent_orthogonal_pair_value():
    zw = Tensor(np.eye(2), requires_grad=True)
    zv = Tensor(np.eye(2), requires_grad=True)
    loss = nt_xent_pair(zw, zv, tau=1.0)
    assert abs(loss.item() - math.log(1.0 + 2.0 / math.e)) < 1e-9


def test_cocoa_identical_unit_vectors_value():
    z = np.array([[1.0, 0.0], [1.0, 0.0]])
    views = [Tensor(z.copy()), Tensor(z.copy())]
    assert abs(cocoa(views, tau=1.0, lam=1.0).item() - (4.0 + 2.0 * math.e)) < 1e-9


def test_ts2vec_single_window_single_step_is_zero():
    views = [Tensor(np.random.default_rng(1).standard_normal((1, 4, 1))) for _ in range(2)]
    assert ts2vec(views).item() == 0.0


# --- oracle agreement -------------------------------------------------------


def test_losses_match_direct_summation_oracles():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(1, 5))
        v = int(rng.integers(2, 4))
        l = int(rng.integers(1, 7))
        t = int(rng.integers(1, 5))
        flat = _rand_views(rng, v, n, l)
        seq = _rand_views(rng, v, n, l, t)
        got = nt_xent(flat, tau=0.7).item()
        want = loss_oracles.nt_xent([x.data for x in flat], tau=0.7)
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))
        got = ts2vec(seq).item()
        want = loss_oracles.ts2vec([x.data for x in seq])
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))
        got = cocoa(flat, tau=0.7, lam=0.5).item()
        want = loss_oracles.cocoa([x.data for x in flat], tau=0.7, lam=0.5)
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


def test_dual_oracle_agreement_includes_degenerate_axes():
    rng = np.random.default_rng(3)
    for n, t in [(1, 4), (4, 1), (1, 1), (3, 3)]:
        zw = rng.standard_normal((n, t, 5))
        zv = rng.standard_normal((n, t, 5))
        got = ts2vec_dual(Tensor(zw), Tensor(zv)).item()
        want = loss_oracles.ts2vec_dual(zw, zv)
        assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


# --- symmetries and invariances --------------------------------------------


def test_view_permutation_invariance():
    rng = np.random.default_rng(7)
    flat = _rand_views(rng, 3, 3, 5)
    seq = _rand_views(rng, 3, 3, 5, 4)
    for fn, views in [
        (lambda v: nt_xent(v, tau=0.6), flat),
        (lambda v: cocoa(v, tau=0.6, lam=0.8), flat),
        (ts2vec, seq),
    ]:
        base = fn(views).item()
        for perm in [(1, 0, 2), (2, 1, 0), (1, 2, 0)]:
            assert abs(fn([views[i] for i in perm]).item() - base) <= 1e-12 * max(1.0, abs(base))


def test_batch_permutation_invariance():
    rng = np.random.default_rng(8)
    flat = _rand_views(rng, 2, 4, 5)
    seq = _rand_views(rng, 2, 4, 5, 3)
    perm = np.array([2, 0, 3, 1])
    base = nt_xent(flat, tau=0.5).item()
    permuted = nt_xent([Tensor(v.data[perm]) for v in flat], tau=0.5).item()
    assert abs(base - permuted) <= 1e-12 * max(1.0, abs(base))
    base = ts2vec(seq).item()
    permuted = ts2vec([Tensor(v.data[perm]) for v in seq]).item()
    assert abs(base - permuted) <= 1e-12 * max(1.0, abs(base))
    base = cocoa(flat, tau=0.5, lam=1.0).item()
    permuted = cocoa([Tensor(v.data[perm]) for v in flat], tau=0.5, lam=1.0).item()
    assert abs(base - permuted) <= 1e-12 * max(1.0, abs(base))


def test_cosine_losses_are_rescale_invariant_but_ts2vec_is_not():
    rng = np.random.default_rng(9)
    flat = _rand_views(rng, 2, 3, 6)
    seq = _rand_views(rng, 2, 3, 6, 4)
    alpha = 2.0
    base = nt_xent(flat, tau=0.4).item()
    scaled = nt_xent([Tensor(v.data * alpha) for v in flat], tau=0.4).item()
    assert abs(base - scaled) <= 1e-9 * max(1.0, abs(base))
    base = cocoa(flat, tau=0.4, lam=0.7).item()
    scaled = cocoa([Tensor(v.data * alpha) for v in flat], tau=0.4, lam=0.7).item()
    assert abs(base - scaled) <= 1e-9 * max(1.0, abs(base))
    # raw dot products: scaling by 2 must change the value
    base = ts2vec(seq).item()
    scaled = ts2vec([Tensor(v.data * alpha) for v in seq]).item()
    assert abs(base - scaled) > 1e-6


def test_nt_xent_is_nonnegative():
    rng = np.random.default_rng(10)
    for _ in range(20):
        views = _rand_views(rng, int(rng.integers(2, 4)), int(rng.integers(1, 5)), 6)
        assert nt_xent(views, tau=0.5).item() >= 0.0


# --- structure of the hierarchy ---------------------------------------------


def test_hierarchy_averages_pooled_levels():
    rng = np.random.default_rng(11)
    zw = rng.standard_normal((2, 3, 4))
    zv = rng.standard_normal((2, 3, 4))

    def pool(z):  # max over adjacent pairs along time
        return np.maximum(z[:, :, 0::2], z[:, :, 1::2])[:, :, : z.shape[2] // 2]

    # T=4 -> levels at T=4, T=2, T=1
    l0 = loss_oracles.ts2vec_dual(zw.swapaxes(1, 2), zv.swapaxes(1, 2))
    w1, v1 = pool(zw), pool(zv)
    l1 = loss_oracles.ts2vec_dual(w1.swapaxes(1, 2), v1.swapaxes(1, 2))
    w2, v2 = pool(w1), pool(v1)
    l2 = loss_oracles.ts2vec_dual(w2.swapaxes(1, 2), v2.swapaxes(1, 2))
    want = (l0 + l1 + l2) / 3.0
    got = ts2vec([Tensor(zw), Tensor(zv)]).item()
    assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


def test_hierarchy_disabled_is_single_level():
    rng = np.random.default_rng(12)
    views = _rand_views(rng, 2, 3, 4, 6)
    got = ts2vec(views, hierarchy=False).item()
    zw, zv = views[0].data, views[1].data
    want = loss_oracles.ts2vec_dual(zw.swapaxes(1, 2), zv.swapaxes(1, 2))
    assert abs(got - want) <= 1e-9 * max(1.0, abs(want))


def test_dual_normalization_always_includes_both_terms():
    # one window: instance term omitted, temporal term still divided by 2NT
    zw = np.random.default_rng(13).standard_normal((1, 3, 4))
    zv = np.random.default_rng(14).standard_normal((1, 3, 4))
    got = ts2vec_dual(Tensor(zw.swapaxes(1, 2)), Tensor(zv.swapaxes(1, 2))).item()
    want = loss_oracles.ts2vec_dual(zw.swapaxes(1, 2), zv.swapaxes(1, 2))
    assert abs(got - want) <= 1e-12 * max(1.0, abs(want))


# --- guards and dispatch ----------------------------------------------------


def test_losses_reject_fewer_than_two_views():
    one = [Tensor(np.ones((2, 3)))]
    with pytest.raises(ConfigError):
        nt_xent(one, tau=0.5)
    with pytest.raises(ConfigError):
        cocoa(one, tau=0.5, lam=1.0)
    with pytest.raises(ConfigError):
        ts2vec([Tensor(np.ones((2, 3, 2)))])


def test_losses_reject_mismatched_shapes():
    with pytest.raises(DimensionError):
        nt_xent([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))], tau=0.5)
    with pytest.raises(DimensionError):
        nt_xent_pair(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))), tau=0.5)
    with pytest.raises(DimensionError):
        ts2vec([Tensor(np.ones((2, 3, 2))), Tensor(np.ones((2, 3, 3)))])
    with pytest.raises(DimensionError):
        ts2vec([Tensor(np.ones((2, 6))), Tensor(np.ones((2, 6)))])


def test_parameter_validation():
    views = [Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))]
    with pytest.raises(ConfigError):
        nt_xent(views, tau=0.0)
    with pytest.raises(ConfigError):
        cocoa(views, tau=-1.0, lam=1.0)
    with pytest.raises(ConfigError):
        cocoa(views, tau=1.0, lam=-0.5)
    with pytest.raises(ConfigError):
        LossConfig(tau=0.0).validate()
    with pytest.raises(ConfigError):
        LossConfig(lam=-1.0).validate()


def test_compute_loss_dispatch():
    rng = np.random.default_rng(15)
    cfg = LossConfig(tau=0.5, lam=1.0, hierarchy_enabled=True)
    flat = _rand_views(rng, 2, 3, 4)
    seq = _rand_views(rng, 2, 3, 4, 2)
    assert compute_loss("nt_xent", flat, cfg).item() == nt_xent(flat, tau=0.5).item()
    assert compute_loss("ts2vec", seq, cfg).item() == ts2vec(seq).item()
    assert compute_loss("cocoa", flat, cfg).item() == cocoa(flat, tau=0.5, lam=1.0).item()
    with pytest.raises(ConfigError):
        compute_loss("simclr", flat, cfg)


def test_nt_xent_flattens_sequence_views():
    rng = np.random.default_rng(16)
    seq = _rand_views(rng, 2, 3, 4, 5)
    flat = [Tensor(v.data.reshape(3, 20)) for v in seq]
    assert abs(nt_xent(seq, tau=0.5).item() - nt_xent(flat, tau=0.5).item()) < 1e-12


def test_cocoa_exponent_clamp_counts_events():
    before = clamp_event_count()
    # tau tiny -> exponent 1/tau quit large, triggers the cap
    views = [Tensor(np.eye(2)), Tensor(np.eye(2) * 0.5 + 0.5)]
    value = cocoa(views, tau=0.005, lam=1.0).item()
    assert np.isfinite(value)
    assert clamp_event_count() > before


def test_gradients_flow_through_all_views():
    rng = np.random.default_rng(17)
    for build, make in [
        (lambda v: nt_xent(v, tau=0.5), lambda: _rand_views(rng, 3, 3, 4)),
        (lambda v: cocoa(v, tau=0.5, lam=0.5), lambda: _rand_views(rng, 3, 3, 4)),
        (ts2vec, lambda: _rand_views(rng, 3, 3, 4, 4)),
    ]:
        views = make()
        build(views).backward()
        for v in views:
            assert v.grad is not None
            assert np.any(v.grad != 0.0)

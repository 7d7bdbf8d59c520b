"""Neural ops: forward values against hand-computed cases, plus contracts."""

import numpy as np
import pytest
from scipy.special import ndtr

from mvts.errors import ConfigError, DimensionError, UsageError
from mvts.ops import (
    avgpool1d,
    conv1d,
    conv_output_len,
    dropout,
    gelu,
    group_norm,
    linear,
    maxpool1d,
    relu,
    scaled_cosine_similarity,
    softmax,
)
from mvts.tensor import Tensor


def test_relu_values():
    x = Tensor([-2.0, 0.0, 3.0])
    np.testing.assert_array_equal(relu(x).data, [0.0, 0.0, 3.0])


def test_gelu_matches_gaussian_cdf_form():
    x = np.array([-1.0, 0.0, 1.0, 2.5])
    np.testing.assert_allclose(gelu(Tensor(x)).data, x * ndtr(x), rtol=0, atol=0)
    assert abs(gelu(Tensor(1.0)).item() - 0.8413447460685429) < 1e-12


def test_conv1d_sliding_dot_product():
    x = Tensor(np.array([[[1.0, 2.0, 3.0, 4.0, 5.0]]]))
    w = Tensor(np.array([[[1.0, 0.0, -1.0]]]))
    out = conv1d(x, w)
    np.testing.assert_allclose(out.data, [[[-2.0, -2.0, -2.0]]])


def test_conv1d_stride_and_padding():
    x = Tensor(np.arange(6.0).reshape(1, 1, 6))
    w = Tensor(np.ones((1, 1, 2)))
    out = conv1d(x, w, stride=2, padding=1)
    # padded: 0 0 1 2 3 4 5 0 -> windows at 0,2,4,6
    np.testing.assert_allclose(out.data, [[[0.0, 3.0, 7.0, 5.0]]])


def test_conv1d_multi_channel_sums_over_input_channels():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 8))
    w = rng.standard_normal((4, 3, 2))
    out = conv1d(Tensor(x), Tensor(w)).data
    expect = np.empty((2, 4, 7))
    for n in range(2):
        for o in range(4):
            for t in range(7):
                expect[n, o, t] = (x[n, :, t : t + 2] * w[o]).sum()
    np.testing.assert_allclose(out, expect, atol=1e-12)


def test_conv1d_errors():
    with pytest.raises(DimensionError):
        conv1d(Tensor(np.ones((1, 3))), Tensor(np.ones((1, 1, 2))))
    with pytest.raises(DimensionError):
        conv1d(Tensor(np.ones((1, 2, 5))), Tensor(np.ones((1, 3, 2))))
    with pytest.raises(ConfigError):
        conv1d(Tensor(np.ones((1, 1, 5))), Tensor(np.ones((1, 1, 2))), stride=0)


def test_conv_output_len_matches_floor_formula():
    for t in range(1, 40):
        for k in range(1, 6):
            for s in range(1, 4):
                for p in range(0, 3):
                    if t + 2 * p < k:
                        with pytest.raises(ConfigError):
                            conv_output_len(t, k, s, p)
                    else:
                        assert conv_output_len(t, k, s, p) == (t + 2 * p - k) // s + 1


def test_maxpool_values_and_short_input():
    x = Tensor(np.array([[[3.0, 1.0, 4.0, 1.0, 5.0, 9.0]]]))
    np.testing.assert_allclose(maxpool1d(x, 2, 2).data, [[[3.0, 4.0, 9.0]]])
    short = Tensor(np.array([[[2.0, 7.0, 1.0]]]))
    np.testing.assert_allclose(maxpool1d(short, 4, 4).data, [[[7.0]]])


def test_maxpool_gradient_goes_to_argmax_only():
    x = Tensor(np.array([[[1.0, 5.0, 2.0, 3.0]]]), requires_grad=True)
    maxpool1d(x, 2, 2).sum().backward()
    np.testing.assert_array_equal(x.grad, [[[0.0, 1.0, 0.0, 1.0]]])


def test_avgpool_bins():
    x = Tensor(np.arange(33.0).reshape(1, 1, 33))
    out = avgpool1d(x, [0, 8, 16, 24, 33])
    np.testing.assert_allclose(out.data[0, 0], [3.5, 11.5, 19.5, 28.0])
    with pytest.raises(ConfigError):
        avgpool1d(x, [0, 40])
    with pytest.raises(ConfigError):
        avgpool1d(x, [5, 5, 10])


def test_group_norm_single_group_values():
    x = Tensor(np.array([[[1.0, 3.0], [2.0, 4.0]]]))
    out = group_norm(x, 1, eps=0.0)
    np.testing.assert_allclose(
        out.data.ravel(), (np.array([1.0, 3.0, 2.0, 4.0]) - 2.5) / np.sqrt(1.25)
    )


def test_group_norm_normalizes_per_group():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((3, 8, 5)) * 4.0 + 2.0)
    out = group_norm(x, 4, eps=1e-12).data.reshape(3, 4, 10)
    np.testing.assert_allclose(out.mean(axis=2), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=2), 1.0, atol=1e-6)


def test_group_norm_affine_and_errors():
    x = Tensor(np.ones((1, 4, 2)))
    scale = Tensor(np.full(4, 2.0))
    shift = Tensor(np.arange(4.0))
    out = group_norm(x, 2, scale=scale, shift=shift)
    # constant input normalizes to zero, leaving only the shift
    np.testing.assert_allclose(out.data[0, :, 0], np.arange(4.0))
    with pytest.raises(ConfigError):
        group_norm(x, 3)
    with pytest.raises(DimensionError):
        group_norm(Tensor(np.ones((4, 2))), 2)


def test_softmax_rows_and_shift_invariance():
    x = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    out = softmax(Tensor(x)).data
    np.testing.assert_allclose(out.sum(axis=1), [1.0, 1.0])
    np.testing.assert_allclose(out[1], [1 / 3] * 3)
    shifted = softmax(Tensor(x + 100.0)).data
    np.testing.assert_allclose(out, shifted, atol=1e-12)


def test_dropout_eval_is_identity_object():
    x = Tensor(np.ones((2, 3)))
    assert dropout(x, 0.5, train=False) is x
    assert dropout(x, 0.0, train=True, rng=np.random.default_rng(0)) is x


def test_dropout_train_scales_kept_values():
    rng = np.random.default_rng(7)
    x = Tensor(np.ones((200, 200)))
    out = dropout(x, 0.25, train=True, rng=rng).data
    kept = out != 0.0
    np.testing.assert_allclose(out[kept], 1.0 / 0.75)
    assert abs(kept.mean() - 0.75) < 0.01


def test_dropout_errors():
    x = Tensor(np.ones(3))
    with pytest.raises(ConfigError):
        dropout(x, 1.0, train=True, rng=np.random.default_rng(0))
    with pytest.raises(UsageError):
        dropout(x, 0.5, train=True)


def test_dropout_seeded_mask_is_reproducible():
    x = Tensor(np.ones((4, 4)))
    a = dropout(x, 0.5, train=True, rng=np.random.default_rng(3)).data
    b = dropout(x, 0.5, train=True, rng=np.random.default_rng(3)).data
    np.testing.assert_array_equal(a, b)


def test_linear_matches_affine_map():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 3))
    w = rng.standard_normal((3, 4))
    b = rng.standard_normal(4)
    out = linear(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(out, x @ w + b, atol=1e-12)


def test_linear_higher_rank_input():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 5, 3))
    w = rng.standard_normal((3, 4))
    out = linear(Tensor(x), Tensor(w)).data
    np.testing.assert_allclose(out, x @ w, atol=1e-12)


def test_linear_batch_rows_bitwise_independent():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((6, 32))
    w = rng.standard_normal((32, 16))
    full = linear(Tensor(x), Tensor(w)).data
    for i in range(6):
        row = linear(Tensor(x[i : i + 1]), Tensor(w)).data
        np.testing.assert_array_equal(full[i : i + 1], row)


def test_scaled_cosine_similarity_values():
    a = Tensor(np.array([[1.0, 0.0], [0.0, 2.0]]))
    b = Tensor(np.array([[2.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    out = scaled_cosine_similarity(a, b, tau=0.5).data
    assert out.shape == (2, 3)
    np.testing.assert_allclose(out[0, 0], 2.0, atol=1e-9)  # parallel / 0.5
    np.testing.assert_allclose(out[0, 1], 0.0, atol=1e-9)  # orthogonal
    np.testing.assert_allclose(out[0, 2], np.sqrt(0.5) / 0.5, atol=1e-9)
    with pytest.raises(ConfigError):
        scaled_cosine_similarity(a, b, tau=0.0)
    with pytest.raises(DimensionError):
        scaled_cosine_similarity(a, Tensor(np.ones((2, 3))), tau=1.0)


def test_scaled_cosine_zero_row_stays_finite():
    a = Tensor(np.zeros((1, 3)))
    b = Tensor(np.ones((1, 3)))
    out = scaled_cosine_similarity(a, b, tau=1.0).data
    assert np.isfinite(out).all()


def test_conv1d_batch_rows_bitwise_independent():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((5, 2, 20))
    w = rng.standard_normal((3, 2, 3))
    full = conv1d(Tensor(x), Tensor(w), stride=2, padding=1).data
    for i in range(5):
        one = conv1d(Tensor(x[i : i + 1]), Tensor(w), stride=2, padding=1).data
        np.testing.assert_array_equal(full[i : i + 1], one)

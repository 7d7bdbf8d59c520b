"""Downstream heads and evaluation metrics.

Channel representations reach the classifier either through the pretrained
MPNN aggregate or through a learned linear mix of channels. The classifier
itself pools time down to 4 steps, flattens to 256 features, and applies one
linear layer; `classify` returns softmax probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .encoder import REP_DIM, ChannelRepresentation, uniform_init
from .errors import ConfigError, DimensionError, UsageError
from .tensor import Tensor, narrow

POOLED_STEPS = 4
CLASSIFIER_IN = POOLED_STEPS * REP_DIM  # 256


@dataclass
class HeadParams:
    classifier_w: Tensor  # [256, num_classes]
    classifier_b: Tensor  # [num_classes]
    combiner: Tensor | None = None  # [C_d, 1] for the linear-mix path
    num_classes: int = 2

    def named(self):
        yield "head.classifier_w", self.classifier_w
        yield "head.classifier_b", self.classifier_b
        if self.combiner is not None:
            yield "head.combiner", self.combiner

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


def init_head_params(
    rng: np.random.Generator, num_classes: int, num_channels: int | None = None
) -> HeadParams:
    """Fresh head; pass num_channels to include linear combiner weights."""
    if num_classes < 2:
        raise ConfigError(f"classification needs at least 2 classes, got {num_classes}")
    combiner = None
    if num_channels is not None:
        if num_channels < 1:
            raise ConfigError(f"combiner needs at least 1 channel, got {num_channels}")
        combiner = uniform_init(rng, (num_channels, 1), num_channels)
    return HeadParams(
        classifier_w=uniform_init(rng, (CLASSIFIER_IN, num_classes), CLASSIFIER_IN),
        classifier_b=Tensor(np.zeros(num_classes), requires_grad=True),
        combiner=combiner,
        num_classes=num_classes,
    )


def combine_linear(reps: list[ChannelRepresentation], weights: Tensor) -> Tensor:
    """Weighted sum of channel representations with learned [C_d, 1] weights."""
    if not reps:
        raise UsageError("combine_linear needs at least one representation")
    if weights.shape != (len(reps), 1):
        raise DimensionError(
            f"combiner weights {weights.shape} do not match {len(reps)} channels"
        )
    total: Tensor | None = None
    for i, rep in enumerate(reps):
        values = rep.values if isinstance(rep, ChannelRepresentation) else rep
        w_i = narrow(weights, 0, i, i + 1).reshape(())
        term = values * w_i
        total = term if total is None else total + term
    return total


def adaptive_bins(t_out: int, bins: int = POOLED_STEPS) -> list[int]:
    """Bin boundaries floor(i*t_out/bins) for i = 0..bins."""
    if t_out < bins:
        raise ConfigError(
            f"adaptive pooling to {bins} steps needs T_out >= {bins}, got {t_out}"
        )
    return [(i * t_out) // bins for i in range(bins + 1)]


def classify_logits(z: Tensor, params: HeadParams) -> Tensor:
    """Pool to 4 steps, flatten to 256, linear; pre-softmax scores [N, K]."""
    if z.ndim != 3 or z.shape[1] != REP_DIM:
        raise DimensionError(f"classify expects [N, {REP_DIM}, T_out], got {z.shape}")
    bins = adaptive_bins(z.shape[2])
    pooled = ops.avgpool1d(z, bins)  # [N, 64, 4]
    flat = pooled.reshape((z.shape[0], CLASSIFIER_IN))
    return ops.linear(flat, params.classifier_w, params.classifier_b)


def classify(z: Tensor, params: HeadParams, train: bool = False) -> Tensor:
    """Class probabilities [N, num_classes]; rows sum to 1."""
    return ops.softmax(classify_logits(z, params))


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood from raw scores (stable log-softmax)."""
    n, k = logits.shape
    if len(labels) != n:
        raise DimensionError(f"{n} rows but {len(labels)} labels")
    m = Tensor(logits.data.max(axis=1, keepdims=True))
    shifted = logits - m
    log_norm = shifted.exp().sum(axis=1, keepdims=True).log()
    log_probs = shifted - log_norm
    onehot = np.zeros((n, k))
    onehot[np.arange(n), np.asarray(labels, dtype=int)] = 1.0
    return (log_probs * Tensor(onehot)).sum() * (-1.0 / n)


def balanced_accuracy(predictions, labels, num_classes: int) -> float:
    """Mean per-class recall; classes absent from the labels are skipped."""
    preds = np.asarray(predictions, dtype=int)
    truth = np.asarray(labels, dtype=int)
    if truth.size == 0:
        raise UsageError("balanced_accuracy needs at least one labeled sample")
    if preds.shape != truth.shape:
        raise DimensionError(f"{preds.shape} predictions vs {truth.shape} labels")
    recalls = []
    for c in range(num_classes):
        mask = truth == c
        if mask.any():
            recalls.append(float(np.mean(preds[mask] == c)))
    return float(np.mean(recalls))

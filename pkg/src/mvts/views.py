"""Positive-view construction for contrastive pretraining.

Two strategies: every channel representation is its own view, or the channels
are split into two random groups whose members are fused by the shared MPNN
into one view each. The partition is redrawn for every batch by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import ChannelRepresentation
from .errors import ConfigError, UsageError
from .mpnn import MpnnParams, aggregate
from .tensor import Tensor

PER_CHANNEL = "per_channel"
TWO_GROUP = "two_group"
STRATEGIES = (PER_CHANNEL, TWO_GROUP)


@dataclass
class Partition:
    group1: tuple[int, ...]
    group2: tuple[int, ...]
    provenance: str | None = None

    def validate(self, c: int) -> None:
        g1, g2 = set(self.group1), set(self.group2)
        if len(g1) < 2 or len(g2) < 2:
            raise ConfigError(f"both groups need at least 2 channels, got {self.group1} / {self.group2}")
        if g1 & g2:
            raise ConfigError(f"groups overlap: {sorted(g1 & g2)}")
        if g1 | g2 != set(range(c)):
            raise ConfigError(f"groups do not cover all {c} channels: {self.group1} / {self.group2}")


@dataclass
class ViewSet:
    views: list[Tensor]  # each [N, 64, T_out]
    strategy: str
    partition: Partition | None = None


def per_channel_views(reps: list[ChannelRepresentation]) -> ViewSet:
    """Strategy A: each channel representation is one view (V = C)."""
    if len(reps) < 2:
        raise ConfigError(
            f"per-channel views need at least 2 channels for a positive pair, got {len(reps)}"
        )
    return ViewSet(views=[r.values for r in reps], strategy=PER_CHANNEL)


def random_partition(
    c: int, rng: np.random.Generator, provenance: str | None = None
) -> Partition:
    """Split channels {0..c-1} into two disjoint groups, both of size >= 2.

    The size of group 1 is uniform over {2..c-2}, then its members are a
    uniform random subset of that size.
    """
    if c < 4:
        raise ConfigError(
            f"two-group partitioning needs at least 4 channels, got {c}; "
            "use the per-channel strategy instead"
        )
    c1 = int(rng.integers(2, c - 1))
    members = rng.choice(c, size=c1, replace=False)
    g1 = tuple(sorted(int(i) for i in members))
    g2 = tuple(i for i in range(c) if i not in set(g1))
    return Partition(group1=g1, group2=g2, provenance=provenance)


def two_group_views(
    reps: list[ChannelRepresentation],
    partition: Partition,
    mpnn_params: MpnnParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ViewSet:
    """Strategy B: aggregate each partition group with the same MPNN (V = 2)."""
    partition.validate(len(reps))
    v1 = aggregate([reps[i] for i in partition.group1], mpnn_params, train=train, rng=rng)
    v2 = aggregate([reps[i] for i in partition.group2], mpnn_params, train=train, rng=rng)
    return ViewSet(views=[v1, v2], strategy=TWO_GROUP, partition=partition)

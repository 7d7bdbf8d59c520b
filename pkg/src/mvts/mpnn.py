"""Message passing aggregator over fully connected channel graphs.

Node states are [N, 64, T] channel representations. Each round computes, for
every vertex, the mean of a learned message from every other vertex
(concatenated receiver/sender features through linear + dropout + ReLU,
shared across timesteps) and adds it to the receiver's state. All messages in
a round read the pre-round states. A final readout MLP maps the vertex mean
to one representation, so any graph size collapses to the same output shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .encoder import REP_DIM, ChannelRepresentation, uniform_init
from .errors import UsageError
from .tensor import Tensor, concat, swapaxes


@dataclass
class MessageParams:
    weight: Tensor  # [2*64, 64]
    bias: Tensor  # [64]

    def named(self, prefix: str):
        yield f"{prefix}.w", self.weight
        yield f"{prefix}.b", self.bias


@dataclass
class ReadoutParams:
    w1: Tensor  # [64, 64]
    b1: Tensor
    w2: Tensor  # [64, 64]
    b2: Tensor

    def named(self, prefix: str):
        yield f"{prefix}.w1", self.w1
        yield f"{prefix}.b1", self.b1
        yield f"{prefix}.w2", self.w2
        yield f"{prefix}.b2", self.b2


@dataclass
class MpnnParams:
    messages: list[MessageParams]  # one per round
    readout: ReadoutParams
    dropout_rate: float = 0.1

    @property
    def rounds(self) -> int:
        return len(self.messages)

    def named(self):
        for k, msg in enumerate(self.messages):
            yield from msg.named(f"mpnn.message{k}")
        yield from self.readout.named("mpnn.readout")

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


@dataclass
class NodeStateSet:
    states: list[Tensor]  # each [N, 64, T]
    round_index: int = 0


def init_mpnn_params(
    rng: np.random.Generator, rounds: int = 1, dropout_rate: float = 0.1
) -> MpnnParams:
    if rounds < 1:
        raise UsageError(f"need at least one message round, got {rounds}")
    messages = [
        MessageParams(
            weight=uniform_init(rng, (2 * REP_DIM, REP_DIM), 2 * REP_DIM),
            bias=Tensor(np.zeros(REP_DIM), requires_grad=True),
        )
        for _ in range(rounds)
    ]
    readout = ReadoutParams(
        w1=uniform_init(rng, (REP_DIM, REP_DIM), REP_DIM),
        b1=Tensor(np.zeros(REP_DIM), requires_grad=True),
        w2=uniform_init(rng, (REP_DIM, REP_DIM), REP_DIM),
        b2=Tensor(np.zeros(REP_DIM), requires_grad=True),
    )
    return MpnnParams(messages=messages, readout=readout, dropout_rate=dropout_rate)


def _per_timestep_message(
    receiver: Tensor,
    sender: Tensor,
    params: MessageParams,
    dropout_rate: float,
    train: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    pair = concat([receiver, sender], axis=1)  # [N, 128, T]
    h = swapaxes(pair, 1, 2)  # [N, T, 128]
    h = ops.linear(h, params.weight, params.bias)
    h = ops.dropout(h, dropout_rate, train, rng)
    h = ops.relu(h)
    return swapaxes(h, 1, 2)  # [N, 64, T]


def message_round(
    states: NodeStateSet,
    params: MessageParams,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> NodeStateSet:
    """One synchronous round: every vertex receives the mean message."""
    vertices = states.states
    c = len(vertices)
    if c < 2:
        raise UsageError(f"message passing needs at least 2 vertices, got {c}")
    updated = []
    for i, receiver in enumerate(vertices):
        total: Tensor | None = None
        for j, sender in enumerate(vertices):
            if j == i:
                continue
            m = _per_timestep_message(receiver, sender, params, dropout_rate, train, rng)
            total = m if total is None else total + m
        updated.append(receiver + total * (1.0 / (c - 1)))
    return NodeStateSet(states=updated, round_index=states.round_index + 1)


def readout(
    states: NodeStateSet,
    params: ReadoutParams,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Vertex mean followed by the shared two-layer MLP, per timestep."""
    vertices = states.states
    if not vertices:
        raise UsageError("readout needs at least one vertex")
    total = vertices[0]
    for v in vertices[1:]:
        total = total + v
    mean = total * (1.0 / len(vertices))
    h = swapaxes(mean, 1, 2)  # [N, T, 64]
    h = ops.linear(h, params.w1, params.b1)
    h = ops.dropout(h, dropout_rate, train, rng)
    h = ops.relu(h)
    h = ops.linear(h, params.w2, params.b2)
    return swapaxes(h, 1, 2)


def aggregate(
    group,
    params: MpnnParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Full pipeline: K message rounds then readout, for any group size >= 1.

    A single-vertex group skips straight to the readout; there is nothing to
    exchange messages with.
    """
    vertices = [g.values if isinstance(g, ChannelRepresentation) else g for g in group]
    if not vertices:
        raise UsageError("aggregate needs a non-empty group")
    states = NodeStateSet(states=vertices, round_index=0)
    if len(vertices) > 1:
        for msg_params in params.messages:
            states = message_round(
                states, msg_params, params.dropout_rate, train=train, rng=rng
            )
    return readout(states, params.readout, params.dropout_rate, train=train, rng=rng)

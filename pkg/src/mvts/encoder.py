"""Single-channel convolutional encoder shared by every input channel.

Seven layers: six strided conv blocks walking the input down by a factor of
96, then a width-1 readout block projecting 256 channels to 64. Each block is
conv -> bias -> dropout -> group norm -> GELU. The same parameter set encodes
every channel of a multichannel window independently, which is what makes the
whole model agnostic to channel count and order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .errors import ConfigError, UsageError
from .tensor import Tensor, narrow

# (c_in, c_out, kernel, stride, padding) for each layer; readout last.
LAYER_PLAN: tuple[tuple[int, int, int, int, int], ...] = (
    (1, 256, 3, 3, 1),
    (256, 256, 2, 2, 1),
    (256, 256, 2, 2, 1),
    (256, 256, 2, 2, 1),
    (256, 256, 2, 2, 1),
    (256, 256, 2, 2, 1),
    (256, 64, 1, 1, 0),
)

REP_DIM = 64


@dataclass
class ConvBlockParams:
    conv_w: Tensor  # [c_out, c_in, k]
    conv_b: Tensor  # [c_out, 1]
    gn_scale: Tensor  # [c_out]
    gn_shift: Tensor  # [c_out]
    stride: int
    padding: int
    num_groups: int

    def named(self, prefix: str):
        yield f"{prefix}.conv_w", self.conv_w
        yield f"{prefix}.conv_b", self.conv_b
        yield f"{prefix}.gn_scale", self.gn_scale
        yield f"{prefix}.gn_shift", self.gn_shift


@dataclass
class EncoderParams:
    blocks: list[ConvBlockParams]
    dropout_rate: float = 0.1

    def named(self):
        for i, block in enumerate(self.blocks):
            yield from block.named(f"encoder.block{i}")

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named()]


@dataclass
class ChannelRepresentation:
    values: Tensor  # [N, 64, T_out]
    source_channel: int | str = 0


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    """Centered uniform with 1/sqrt(fan_in) bounds; the shared weight init."""
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def init_encoder_params(
    rng: np.random.Generator, dropout_rate: float = 0.1, group_divisor: int = 2
) -> EncoderParams:
    blocks = []
    for c_in, c_out, k, stride, padding in LAYER_PLAN:
        blocks.append(
            ConvBlockParams(
                conv_w=uniform_init(rng, (c_out, c_in, k), c_in * k),
                conv_b=Tensor(np.zeros((c_out, 1)), requires_grad=True),
                gn_scale=Tensor(np.ones(c_out), requires_grad=True),
                gn_shift=Tensor(np.zeros(c_out), requires_grad=True),
                stride=stride,
                padding=padding,
                num_groups=c_out // group_divisor,
            )
        )
    return EncoderParams(blocks=blocks, dropout_rate=dropout_rate)


def encoder_output_len(t_in: int) -> int:
    """Output length after all seven layers; errors name the failing layer."""
    t = int(t_in)
    for i, (_, _, k, stride, padding) in enumerate(LAYER_PLAN):
        if t + 2 * padding < k:
            raise ConfigError(
                f"input length {t_in} is too short: layer {i + 1} "
                f"(kernel {k}, stride {stride}, padding {padding}) sees only {t} samples"
            )
        t = (t + 2 * padding - k) // stride + 1
    return t


def encode(
    x: Tensor,
    params: EncoderParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
    source_channel: int | str = 0,
) -> ChannelRepresentation:
    """Encode a single-channel batch [N, 1, T_in] to [N, 64, T_out]."""
    if x.ndim != 3 or x.shape[1] != 1:
        raise UsageError(
            f"encode takes [N, 1, T] input, got {x.shape}; split channels first"
        )
    encoder_output_len(x.shape[2])
    h = x
    for block in params.blocks:
        h = ops.conv1d(h, block.conv_w, stride=block.stride, padding=block.padding)
        h = h + block.conv_b
        h = ops.dropout(h, params.dropout_rate, train, rng)
        h = ops.group_norm(h, block.num_groups, scale=block.gn_scale, shift=block.gn_shift)
        h = ops.gelu(h)
    return ChannelRepresentation(values=h, source_channel=source_channel)


def encode_channels(
    x: Tensor,
    params: EncoderParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
    channel_names: list[str] | None = None,
) -> list[ChannelRepresentation]:
    """Encode every channel of [N, C, T_in] with the same parameters."""
    if x.ndim != 3:
        raise UsageError(f"encode_channels takes [N, C, T] input, got {x.shape}")
    reps = []
    for c in range(x.shape[1]):
        tag = channel_names[c] if channel_names is not None else c
        single = narrow(x, 1, c, c + 1)
        reps.append(encode(single, params, train=train, rng=rng, source_channel=tag))
    return reps

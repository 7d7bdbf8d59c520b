"""AdamW with decoupled weight decay.

The decay term is applied directly to the parameter, scaled by the learning
rate but not by the adaptive moments:

    p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * p
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .tensor import Array, Tensor


@dataclass
class AdamWState:
    first_moment: list[Array]
    second_moment: list[Array]
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2


def init_adamw(
    params: list[Tensor],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 1e-2,
) -> AdamWState:
    if lr <= 0.0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ConfigError(f"betas must lie in [0, 1), got {beta1}, {beta2}")
    if eps <= 0.0:
        raise ConfigError(f"eps must be positive, got {eps}")
    if weight_decay < 0.0:
        raise ConfigError(f"weight decay must be non-negative, got {weight_decay}")
    return AdamWState(
        first_moment=[np.zeros_like(p.data) for p in params],
        second_moment=[np.zeros_like(p.data) for p in params],
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        weight_decay=weight_decay,
    )


def adamw_step(params: list[Tensor], grads: list[Array], state: AdamWState) -> None:
    """One in-place update of every parameter from its gradient."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise UsageError(
            f"param/grad/state length mismatch: {len(params)}, {len(grads)}, "
            f"{len(state.first_moment)}"
        )
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            raise UsageError("adamw_step called with a missing gradient")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        # Both terms use the pre-update parameter value.
        p.data -= state.lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p.data)

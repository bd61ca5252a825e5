"""Adagrad with global-norm gradient clipping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdagradState:
    lr: float = 0.15
    acc_init: float = 0.1
    eps: float = 1e-8
    clip_norm: float | None = 2.0
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.acc_init < 0:
            raise ValueError("accumulator init must be non-negative")


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float | None):
    """Rescale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor
    return norm


def adagrad_step(params: dict, grads: dict[str, np.ndarray], state: AdagradState):
    """One in-place Adagrad update: ``acc += g**2; p -= lr * g / (sqrt(acc) + eps)``.

    ``params`` maps names to tensors (anything with a ``.value`` array).
    Parameters with no entry in ``grads`` are left untouched.
    """
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {p.value.shape}")
        acc = state.accumulators.get(name)
        if acc is None:
            acc = np.full(g.shape, state.acc_init)
        acc = acc + g * g
        state.accumulators[name] = acc
        p.value -= state.lr * g / (np.sqrt(acc) + state.eps)
    return params

"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, Tensor]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p.data) for k, p in params.items()},
            v={k: np.zeros_like(p.data) for k, p in params.items()},
        )


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place on params; advances state by 1.

    Every parameter must have a gradient of matching shape.
    """
    t = state.step + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ShapeMismatchError(f"adam_step: missing gradient for {name!r}")
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeMismatchError(
                f"adam_step: {name!r} param {p.data.shape} vs grad {g.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.data.shape or v.shape != p.data.shape:
            raise ShapeMismatchError(
                f"adam_step: {name!r} state {m.shape}/{v.shape} vs param {p.data.shape}"
            )
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + eps)
    state.step = t
    return params, state

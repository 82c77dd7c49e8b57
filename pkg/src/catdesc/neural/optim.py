"""Adam with decoupled weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParameterSet


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterSet, state: AdamState, clip_norm: float | None = None) -> ParameterSet:
    """Apply one Adam update in place and zero the gradients.

    Weight decay shrinks parameters directly (``theta -= lr * wd * theta``)
    rather than being added to the gradient.
    """
    if clip_norm is not None:
        total = np.sqrt(sum(float(np.sum(params[n].grad.astype(np.float64) ** 2)) for n in params))
        if total > clip_norm:
            for n in params:
                params[n].grad *= clip_norm / total
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name in params:
        p = params[name]
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        if state.weight_decay:
            p.data -= state.lr * state.weight_decay * p.data
        p.data -= (state.lr * update).astype(p.data.dtype)
        g[...] = 0.0
    return params

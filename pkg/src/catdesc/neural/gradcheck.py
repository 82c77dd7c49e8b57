"""Central finite differences, the oracle for backward()."""
from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .params import ParameterSet


def finite_difference_gradients(loss_fn: Callable[[ParameterSet], float], params: ParameterSet,
                                h: float = 1e-3, points: int = 2) -> dict[str, np.ndarray]:
    """Estimate d loss / d theta for every scalar in ``params``.

    ``points=2`` is the classic central difference (error O(h^2)); ``points=4``
    uses the five-point stencil (error O(h^4)), which tolerates a larger ``h``
    and so loses less to cancellation when the loss is large.
    ``loss_fn`` must return a float and must not mutate ``params``; each
    scalar is perturbed in place and restored.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    stencils = {2: ((1, 0.5), (-1, -0.5)),
                4: ((1, 2 / 3), (-1, -2 / 3), (2, -1 / 12), (-2, 1 / 12))}
    if points not in stencils:
        raise ValueError("points must be 2 or 4")
    grads = {}
    for name in params:
        value = params[name].data
        est = np.zeros(value.shape, dtype=np.float64)
        flat = value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            total = 0.0
            for step, weight in stencils[points]:
                flat[i] = orig + step * h
                total += weight * float(loss_fn(params))
            flat[i] = orig
            est.reshape(-1)[i] = total / h
        grads[name] = est
    return grads


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray],
                       floor: float = 1e-6) -> float:
    """Largest ``|a - n| / max(|a| + |n|, floor)`` over all scalars."""
    worst = 0.0
    for name, n in numeric.items():
        a = np.asarray(analytic[name], dtype=np.float64)
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst


def backward_gradients(loss_fn_tensor, params: ParameterSet) -> dict[str, np.ndarray]:
    params.zero_grad()
    loss = loss_fn_tensor(params)
    loss.backward()
    return {n: params[n].grad.copy() for n in params}

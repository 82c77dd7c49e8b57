"""Losses and fused operations built on :mod:`catdesc.neural.tensor`.

Normalisers and loss sums are accumulated in float64 and cast back to the
working dtype, so results do not depend on summation order at float32.
"""
from __future__ import annotations

import math

import numpy as np

from .tensor import Tensor, _make, as_tensor, mul, relu, sqrt, sub, tsum

_NEG = -1e9


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite logits")


def _log_softmax64(x: np.ndarray, axis: int) -> np.ndarray:
    x64 = x.astype(np.float64)
    shifted = x64 - x64.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    _check_finite(logits.data)
    out = np.exp(_log_softmax64(logits.data, axis)).astype(logits.dtype)

    def backward(g):
        logits._accumulate(out * (g - (g * out).sum(axis=axis, keepdims=True)))

    return _make(out, (logits,), backward)


def log_softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    _check_finite(logits.data)
    lsm = _log_softmax64(logits.data, axis)
    probs = np.exp(lsm)
    out = lsm.astype(logits.dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        logits._accumulate((g64 - probs * g64.sum(axis=axis, keepdims=True)).astype(logits.dtype))

    return _make(out, (logits,), backward)


def cross_entropy(logits, targets, reduction: str = "sum", ignore_index: int | None = None) -> Tensor:
    """Negative log-likelihood of integer ``targets`` under softmax(logits).

    ``logits`` has shape (..., C) and ``targets`` the leading shape (...).
    Positions whose target equals ``ignore_index`` contribute nothing.
    ``reduction`` is ``"sum"``, ``"mean"`` (over counted positions) or
    ``"none"``.
    """
    logits = as_tensor(logits)
    _check_finite(logits.data)
    targets = np.asarray(targets, dtype=np.int64)
    n_cls = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"target shape {targets.shape} does not match logits {logits.shape}")
    keep = np.ones(targets.shape, dtype=bool) if ignore_index is None else targets != ignore_index
    if np.any((targets[keep] < 0) | (targets[keep] >= n_cls)):
        raise IndexError(f"target index out of range for {n_cls} classes")

    lsm = _log_softmax64(logits.data, -1)
    safe = np.where(keep, targets, 0)
    picked = np.take_along_axis(lsm, safe[..., None], axis=-1)[..., 0]
    per_item = np.where(keep, -picked, 0.0)
    count = max(int(keep.sum()), 1)
    if reduction == "sum":
        out, scale = per_item.sum(), 1.0
    elif reduction == "mean":
        out, scale = per_item.sum() / count, 1.0 / count
    elif reduction == "none":
        out, scale = per_item, None
    else:
        raise ValueError(f"unknown reduction {reduction!r}")

    def backward(g):
        g64 = np.asarray(g, dtype=np.float64)
        if scale is None:
            w = g64 * keep
        else:
            w = np.broadcast_to(g64 * scale, keep.shape) * keep
        grad = np.exp(lsm)
        np.put_along_axis(grad, safe[..., None], np.take_along_axis(grad, safe[..., None], -1) - 1.0, -1)
        logits._accumulate((grad * w[..., None]).astype(logits.dtype))

    return _make(np.asarray(out, dtype=logits.dtype), (logits,), backward)


def cosine_similarity(a, b, axis: int = -1) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    na = np.linalg.norm(a.data, axis=axis)
    nb = np.linalg.norm(b.data, axis=axis)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("degenerate vector")
    dot = tsum(mul(a, b), axis=axis)
    norm_a = sqrt(tsum(mul(a, a), axis=axis))
    norm_b = sqrt(tsum(mul(b, b), axis=axis))
    return dot / (norm_a * norm_b)


def cosine_embedding_loss(v_hat, v_k, is_positive, delta: float = 0.1) -> Tensor:
    """Hinge-style cosine loss: ``1 - cos`` for positives, ``max(0, cos - delta)`` for negatives.

    Works on single vectors (returns a scalar) or on row batches (returns one
    loss per row, with ``is_positive`` a boolean vector).
    """
    v_hat, v_k = as_tensor(v_hat), as_tensor(v_k)
    if v_hat.shape != v_k.shape:
        raise ValueError(f"shape mismatch {v_hat.shape} vs {v_k.shape}")
    cos = cosine_similarity(v_hat, v_k)
    pos = np.asarray(is_positive, dtype=v_hat.dtype)
    neg_part = relu(sub(cos, delta))
    pos_part = sub(1.0, cos)
    return mul(pos_part, pos) + mul(neg_part, 1.0 - pos)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            d = x.shape[-1]
            x._accumulate(
                inv / d * (d * gx - gx.sum(axis=-1, keepdims=True)
                           - xhat * (gx * xhat).sum(axis=-1, keepdims=True))
            )

    return _make(out, (x, gain, bias), backward)


def attention(q: Tensor, k: Tensor, v: Tensor, causal: bool = False, key_mask=None) -> Tensor:
    """Scaled dot-product attention over (batch, heads, time, head_dim) tensors.

    ``key_mask`` (batch, time) marks keys that may be attended to.
    """
    scale = 1.0 / math.sqrt(q.shape[-1])
    scores = (q.data @ np.swapaxes(k.data, -1, -2)) * scale
    allowed = np.ones(scores.shape[-2:], dtype=bool)
    if causal:
        allowed = np.tril(allowed)
    allowed = np.broadcast_to(allowed, scores.shape)
    if key_mask is not None:
        allowed = allowed & np.asarray(key_mask, dtype=bool)[:, None, None, :]
    scores = np.where(allowed, scores, _NEG)
    scores = scores - scores.max(axis=-1, keepdims=True)
    p = np.exp(scores)
    p /= p.sum(axis=-1, keepdims=True)
    out = p @ v.data

    def backward(g):
        if v.requires_grad:
            v._accumulate(np.swapaxes(p, -1, -2) @ g)
        if q.requires_grad or k.requires_grad:
            dp = g @ np.swapaxes(v.data, -1, -2)
            ds = p * (dp - (dp * p).sum(axis=-1, keepdims=True)) * scale
            if q.requires_grad:
                q._accumulate(ds @ k.data)
            if k.requires_grad:
                k._accumulate(np.swapaxes(ds, -1, -2) @ q.data)

    return _make(out.astype(q.dtype), (q, k, v), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = x @ weight
    return out if bias is None else out + bias

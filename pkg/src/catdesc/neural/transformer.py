"""Pre-norm transformer blocks and the class-conditioned decoder.

The decoder input is the class representation, linearly projected to the
model width and placed at position 0, followed by the token embeddings.  The
output row for token position ``i`` therefore sees the class representation
and tokens ``0..i`` only, and is trained to predict token ``i + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .params import ParameterSet, normal_embedding, ones, uniform_fan_in, zeros
from .tensor import Tensor, add, concat, relu, reshape, take_rows, transpose


@dataclass(frozen=True)
class DecoderConfig:
    vocab_size: int
    cond_dim: int
    d_model: int = 128
    n_layers: int = 6
    n_heads: int = 8
    ff_mult: int = 4
    max_len: int = 32

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")


def init_block_params(params: ParameterSet, prefix: str, d_model: int, ff_mult: int,
                      rng: np.random.Generator) -> None:
    d_ff = d_model * ff_mult
    params.add(f"{prefix}.ln1.g", ones(d_model))
    params.add(f"{prefix}.ln1.b", zeros(d_model))
    params.add(f"{prefix}.attn.w_qkv", uniform_fan_in(rng, d_model, 3 * d_model))
    params.add(f"{prefix}.attn.b_qkv", zeros(3 * d_model))
    params.add(f"{prefix}.attn.w_out", uniform_fan_in(rng, d_model, d_model))
    params.add(f"{prefix}.attn.b_out", zeros(d_model))
    params.add(f"{prefix}.ln2.g", ones(d_model))
    params.add(f"{prefix}.ln2.b", zeros(d_model))
    params.add(f"{prefix}.ff.w1", uniform_fan_in(rng, d_model, d_ff))
    params.add(f"{prefix}.ff.b1", zeros(d_ff))
    params.add(f"{prefix}.ff.w2", uniform_fan_in(rng, d_ff, d_model))
    params.add(f"{prefix}.ff.b2", zeros(d_model))


def block_forward(x: Tensor, p, prefix: str, n_heads: int, causal: bool, key_mask=None) -> Tensor:
    b, t, d = x.shape
    dh = d // n_heads
    h = F.layer_norm(x, p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    qkv = F.linear(h, p[f"{prefix}.attn.w_qkv"], p[f"{prefix}.attn.b_qkv"])
    qkv = transpose(reshape(qkv, (b, t, 3, n_heads, dh)), (2, 0, 3, 1, 4))
    q, k, v = qkv[0], qkv[1], qkv[2]
    a = F.attention(q, k, v, causal=causal, key_mask=key_mask)
    a = reshape(transpose(a, (0, 2, 1, 3)), (b, t, d))
    x = add(x, F.linear(a, p[f"{prefix}.attn.w_out"], p[f"{prefix}.attn.b_out"]))
    h = F.layer_norm(x, p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])
    h = relu(F.linear(h, p[f"{prefix}.ff.w1"], p[f"{prefix}.ff.b1"]))
    return add(x, F.linear(h, p[f"{prefix}.ff.w2"], p[f"{prefix}.ff.b2"]))


def init_decoder_params(cfg: DecoderConfig, rng: np.random.Generator,
                        params: ParameterSet | None = None, prefix: str = "dec") -> ParameterSet:
    params = ParameterSet() if params is None else params
    params.add(f"{prefix}.cond.w", uniform_fan_in(rng, cfg.cond_dim, cfg.d_model))
    params.add(f"{prefix}.cond.b", zeros(cfg.d_model))
    params.add(f"{prefix}.tok_emb", normal_embedding(rng, cfg.vocab_size, cfg.d_model))
    params.add(f"{prefix}.pos_emb", normal_embedding(rng, cfg.max_len + 1, cfg.d_model))
    for i in range(cfg.n_layers):
        init_block_params(params, f"{prefix}.layer{i}", cfg.d_model, cfg.ff_mult, rng)
    params.add(f"{prefix}.ln_f.g", ones(cfg.d_model))
    params.add(f"{prefix}.ln_f.b", zeros(cfg.d_model))
    params.add(f"{prefix}.out.w", uniform_fan_in(rng, cfg.d_model, cfg.vocab_size))
    params.add(f"{prefix}.out.b", zeros(cfg.vocab_size))
    return params


def decoder_logits(tokens: np.ndarray, cond: Tensor, p, cfg: DecoderConfig, prefix: str = "dec") -> Tensor:
    """Batched decoder: ``tokens`` (B, T) ints, ``cond`` (B, cond_dim) -> logits (B, T, V)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2:
        raise ValueError("tokens must be (batch, time)")
    b, t = tokens.shape
    if t > cfg.max_len:
        raise ValueError(f"prefix length {t} exceeds max_len {cfg.max_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
        raise ValueError("unknown token id")
    if cond.shape != (b, cfg.cond_dim):
        raise ValueError(f"class representation shape {cond.shape}, expected {(b, cfg.cond_dim)}")
    c = reshape(F.linear(cond, p[f"{prefix}.cond.w"], p[f"{prefix}.cond.b"]), (b, 1, cfg.d_model))
    x = concat([c, take_rows(p[f"{prefix}.tok_emb"], tokens)], axis=1)
    x = add(x, p[f"{prefix}.pos_emb"][: t + 1])
    for i in range(cfg.n_layers):
        x = block_forward(x, p, f"{prefix}.layer{i}", cfg.n_heads, causal=True)
    x = x[:, 1:, :]
    x = F.layer_norm(x, p[f"{prefix}.ln_f.g"], p[f"{prefix}.ln_f.b"])
    return F.linear(x, p[f"{prefix}.out.w"], p[f"{prefix}.out.b"])


def transformer_decoder_forward(prefix_tokens, class_rep, params, cfg: DecoderConfig) -> Tensor:
    """Single-sequence form: returns (len(prefix_tokens), vocab) logits."""
    cond = class_rep if isinstance(class_rep, Tensor) else Tensor(np.asarray(class_rep, dtype=np.float32))
    cond = reshape(cond, (1, cfg.cond_dim))
    logits = decoder_logits(np.asarray(prefix_tokens, dtype=np.int64)[None, :], cond, params, cfg)
    return logits[0]

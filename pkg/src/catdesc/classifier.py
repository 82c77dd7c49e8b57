"""Label-embedding image classifier shared by describer and interpreter.

For image features ``x`` and class embedding rows ``v_i``::

    f1(x)  = relu(x W1 + b1)
    s_i    = relu([f1(x), v_i] W2 + b2) W3
    y_hat  = softmax_i(s_i)

The concatenation is never materialised: ``W2`` is split into its image and
class blocks so that ``[f1, v_i] W2 = f1 W2[:h1] + v_i W2[h1:]``, giving all
N scores with two matrix products and one broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import functional as F
from .neural.params import ParameterSet, normal_embedding, uniform_fan_in, zeros
from .neural.tensor import Tensor, add, as_tensor, concat, relu, reshape


@dataclass(frozen=True)
class ClassifierConfig:
    feature_dim: int = 2048
    n_classes: int = 200
    emb_dim: int = 512
    h1: int = 256
    h2: int = 128


def init_classifier_params(cfg: ClassifierConfig, rng: np.random.Generator,
                           params: ParameterSet | None = None) -> ParameterSet:
    params = ParameterSet() if params is None else params
    params.add("emb.V", normal_embedding(rng, cfg.n_classes, cfg.emb_dim))
    params.add("cls.W1", uniform_fan_in(rng, cfg.feature_dim, cfg.h1))
    params.add("cls.b1", zeros(cfg.h1))
    params.add("cls.W2", uniform_fan_in(rng, cfg.h1 + cfg.emb_dim, cfg.h2))
    params.add("cls.b2", zeros(cfg.h2))
    params.add("cls.W3", uniform_fan_in(rng, cfg.h2, 1))
    return params


def image_encoding(x: Tensor, p) -> Tensor:
    return relu(F.linear(x, p["cls.W1"], p["cls.b1"]))


def class_logits(x, p, cfg: ClassifierConfig, V=None) -> Tensor:
    """Scores of every class for a batch of images: (B, F) -> (B, N).

    ``V`` overrides the embedding table (used for provisional classes).
    """
    x = as_tensor(x)
    if x.ndim == 1:
        x = reshape(x, (1, x.shape[0]))
    if x.shape[1] != cfg.feature_dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match classifier input {cfg.feature_dim}")
    V = p["emb.V"] if V is None else as_tensor(V)
    b, n = x.shape[0], V.shape[0]
    w2 = p["cls.W2"]
    image_part = image_encoding(x, p) @ w2[: cfg.h1]
    class_part = V @ w2[cfg.h1:]
    hidden = relu(add(add(reshape(image_part, (b, 1, cfg.h2)), reshape(class_part, (1, n, cfg.h2))), p["cls.b2"]))
    return reshape(hidden @ p["cls.W3"], (b, n))


def classify(x, p, cfg: ClassifierConfig, V=None, chunk: int = 256) -> np.ndarray:
    """Class probabilities for one image (N,) or a batch (B, N)."""
    arr = np.asarray(x.data if isinstance(x, Tensor) else x)
    single = arr.ndim == 1
    arr = arr[None] if single else arr
    det = {k: Tensor(v.data) for k, v in p.items()}
    Vd = None if V is None else Tensor(np.asarray(V.data if isinstance(V, Tensor) else V))
    out = np.concatenate([
        F.softmax(class_logits(Tensor(arr[i:i + chunk]), det, cfg, Vd), axis=-1).data
        for i in range(0, len(arr), chunk)
    ])
    return out[0] if single else out


def class_score(x, class_index: int, p, cfg: ClassifierConfig, V=None) -> float:
    """Pre-softmax score of one class, computed through the explicit concatenation."""
    V = p["emb.V"] if V is None else as_tensor(V)
    if not 0 <= class_index < V.shape[0]:
        raise IndexError(f"class index {class_index} out of range for {V.shape[0]} classes")
    x = as_tensor(np.asarray(x.data if isinstance(x, Tensor) else x).reshape(1, -1))
    joint = concat([image_encoding(x, p), reshape(V[class_index], (1, cfg.emb_dim))], axis=1)
    hidden = relu(F.linear(joint, p["cls.W2"], p["cls.b2"]))
    return float((hidden @ p["cls.W3"]).data.reshape(()))

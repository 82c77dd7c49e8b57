"""A desk-scale concept world standing in for CUB.

Each class is a distinct assignment of attributes (adjectives) to body parts
(nouns).  Image features are a fixed random projection of the class's
part/attribute one-hot code plus Gaussian noise; descriptions are templated
sentences mentioning a random subset of the class's parts.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .vocab import build_vocabulary, tokenize

DEFAULT_PARTS = ("bill", "wing", "belly", "crown", "tail")
DEFAULT_ATTRIBUTES = ("red", "blue", "yellow", "black")
OPENERS = ("this bird has", "a bird with", "the bird has")


@dataclass
class SyntheticWorldConfig:
    n_classes: int = 30
    parts: list = field(default_factory=lambda: list(DEFAULT_PARTS))
    attributes: list = field(default_factory=lambda: list(DEFAULT_ATTRIBUTES))
    attributes_per_class: int = 3
    feature_dim: int = 64
    noise_sigma: float = 0.1
    images_per_class: int = 20
    descriptions_per_image: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.attributes_per_class > len(self.parts):
            raise ValueError("attributes_per_class cannot exceed the number of parts")
        if self.attributes_per_class < 2:
            raise ValueError("descriptions mention at least two parts; attributes_per_class must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.n_classes < 1 or self.images_per_class < 1 or self.descriptions_per_image < 1:
            raise ValueError("counts must be positive")

    @property
    def n_assignments(self) -> int:
        k = self.attributes_per_class
        return math.comb(len(self.parts), k) * len(self.attributes) ** k

    @classmethod
    def from_json(cls, data: dict) -> "SyntheticWorldConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown synthetic world keys: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SyntheticWorldConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def to_json(self) -> dict:
        return asdict(self)


def _assignments(cfg: SyntheticWorldConfig, rng: np.random.Generator) -> list[dict[int, int]]:
    if cfg.n_classes > cfg.n_assignments:
        raise ValueError(f"{cfg.n_classes} classes but only {cfg.n_assignments} distinct attribute assignments")
    seen, out = set(), []
    n_parts, n_attrs = len(cfg.parts), len(cfg.attributes)
    while len(out) < cfg.n_classes:
        chosen = sorted(rng.choice(n_parts, size=cfg.attributes_per_class, replace=False).tolist())
        assign = {p: int(rng.integers(n_attrs)) for p in chosen}
        key = tuple(sorted(assign.items()))
        if key not in seen:
            seen.add(key)
            out.append(assign)
    return out


def _describe(assign: dict[int, int], cfg: SyntheticWorldConfig, rng: np.random.Generator) -> str:
    parts = list(assign)
    k = int(rng.integers(2, len(parts) + 1))
    picked = [parts[i] for i in rng.permutation(len(parts))[:k]]
    phrases = [f"a {cfg.attributes[assign[p]]} {cfg.parts[p]}" for p in picked]
    body = " , ".join(phrases[:-1]) + " and " + phrases[-1]
    return f"{OPENERS[int(rng.integers(len(OPENERS)))]} {body} ."


def class_signatures(cfg: SyntheticWorldConfig, assignments, rng: np.random.Generator) -> np.ndarray:
    n_attrs = len(cfg.attributes)
    codes = np.zeros((cfg.n_classes, len(cfg.parts) * n_attrs))
    for c, assign in enumerate(assignments):
        for p, a in assign.items():
            codes[c, p * n_attrs + a] = 1.0
    projection = rng.normal(0.0, 1.0 / math.sqrt(cfg.attributes_per_class), size=(codes.shape[1], cfg.feature_dim))
    return (codes @ projection).astype(np.float32)


def generate_synthetic_world(cfg: SyntheticWorldConfig) -> Corpus:
    rng = np.random.default_rng(cfg.seed)
    assignments = _assignments(cfg, rng)
    signatures = class_signatures(cfg, assignments, rng)

    n = cfg.n_classes * cfg.images_per_class
    labels = np.repeat(np.arange(cfg.n_classes), cfg.images_per_class)
    noise = rng.normal(0.0, 1.0, size=(n, cfg.feature_dim)) * cfg.noise_sigma
    features = (signatures[labels] + noise).astype(np.float32)
    texts = [[_describe(assignments[lab], cfg, rng) for _ in range(cfg.descriptions_per_image)] for lab in labels]

    vocab = build_vocabulary(t for per_img in texts for t in per_img)
    descriptions = [[tuple(vocab.encode(tokenize(t))) for t in per_img] for per_img in texts]
    class_names = [
        "_".join(f"{cfg.attributes[a]}-{cfg.parts[p]}" for p, a in sorted(assign.items()))
        for assign in assignments
    ]
    return Corpus(
        image_ids=[f"img{i:06d}" for i in range(n)],
        features=features,
        labels=labels.astype(np.int64),
        descriptions=descriptions,
        class_names=class_names,
        vocab=vocab,
        meta={
            "class_ids": [str(c) for c in range(cfg.n_classes)],
            "signatures": signatures,
            "assignments": [{cfg.parts[p]: cfg.attributes[a] for p, a in sorted(x.items())} for x in assignments],
            "nouns": sorted(set(cfg.parts) | {"bird"}),
            "adjectives": sorted(cfg.attributes),
        },
    )

"""Zero-shot folds with pairwise-disjoint unseen class sets."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus

EVAL_FRACTION = 0.1


@dataclass(frozen=True)
class FoldSpec:
    fold_id: int
    seen: tuple[int, ...]
    unseen: tuple[int, ...]
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def split(self, name: str) -> tuple[str, ...]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def to_json(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_json(cls, d: dict) -> "FoldSpec":
        return cls(
            fold_id=int(d["fold_id"]),
            seen=tuple(int(c) for c in d["seen"]),
            unseen=tuple(int(c) for c in d["unseen"]),
            train=tuple(d["train"]), val=tuple(d["val"]), test=tuple(d["test"]),
        )


def eval_count(n_images: int) -> int:
    """Images per class held out for each of val and test."""
    k = int(n_images * EVAL_FRACTION + 0.5)
    if n_images >= 3:
        k = max(k, 1)
    return k


def class_partition(corpus: Corpus, seed: int) -> dict[str, list[str]]:
    """Per-class ~80/10/10 image split, shared by every fold."""
    rng = np.random.default_rng([seed, 1])
    parts = {"train": [], "val": [], "test": []}
    for label in range(corpus.n_classes):
        idx = corpus.images_of_class(label)
        idx = idx[rng.permutation(len(idx))]
        k = eval_count(len(idx))
        ids = [corpus.image_ids[i] for i in idx]
        parts["test"] += ids[:k]
        parts["val"] += ids[k:2 * k]
        parts["train"] += ids[2 * k:]
    for key in parts:
        parts[key].sort(key=corpus.index_of)
    return parts


def make_folds(corpus: Corpus, n_folds: int = 5, n_unseen: int = 20, seed: int = 0) -> list[FoldSpec]:
    n = corpus.n_classes
    if n_folds < 1 or n_unseen < 1:
        raise ValueError("n_folds and n_unseen must be positive")
    if n_folds * n_unseen > n:
        raise ValueError(f"{n_folds} folds x {n_unseen} unseen classes needs more than {n} classes")
    if n_unseen >= n:
        raise ValueError("no seen classes")
    rng = np.random.default_rng([seed, 0])
    perm = rng.permutation(n)
    parts = class_partition(corpus, seed)
    folds = []
    for f in range(n_folds):
        unseen = tuple(sorted(int(c) for c in perm[f * n_unseen:(f + 1) * n_unseen]))
        seen = tuple(c for c in range(n) if c not in set(unseen))
        folds.append(FoldSpec(f, seen, unseen, tuple(parts["train"]), tuple(parts["val"]), tuple(parts["test"])))
    return folds


def split_by_seen(corpus: Corpus, fold: FoldSpec, split: str) -> tuple[list[str], list[str]]:
    """Image ids of a split, separated into (seen-class, unseen-class)."""
    unseen = set(fold.unseen)
    seen_ids, unseen_ids = [], []
    for img in fold.split(split):
        (unseen_ids if int(corpus.labels[corpus.index_of(img)]) in unseen else seen_ids).append(img)
    return seen_ids, unseen_ids


def save_folds(path, folds: list[FoldSpec]) -> None:
    Path(path).write_text(json.dumps({"folds": [f.to_json() for f in folds]}, indent=1, sort_keys=True))


def load_folds(path) -> list[FoldSpec]:
    return [FoldSpec.from_json(d) for d in json.loads(Path(path).read_text())["folds"]]

"""Image/label/description corpora and their on-disk formats.

Files understood by :func:`load_corpus`:

* descriptions: TSV with header-less rows ``image_id<TAB>class_id<TAB>text``.
* labels: one image per line, ``image_id class_id [class_name]`` separated by
  tabs or spaces (CUB's ``image_class_labels.txt`` is accepted as is).
* features: either the binary matrix format (``count:u32 dim:u32`` then
  little-endian f32 rows in labels-file order) or CSV rows
  ``image_id,f1,...,fD``.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vocab import Vocabulary, build_vocabulary, tokenize


@dataclass(frozen=True)
class Example:
    image_id: str
    features: np.ndarray
    label: int
    description: tuple[int, ...]


@dataclass
class Corpus:
    image_ids: list[str]
    features: np.ndarray            # (n_images, feature_dim) float32
    labels: np.ndarray              # (n_images,) int64 in [0, n_classes)
    descriptions: list[list[tuple[int, ...]]]   # token ids per image
    class_names: list[str]
    vocab: Vocabulary
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.image_ids)
        if self.features.shape[0] != n or self.labels.shape[0] != n or len(self.descriptions) != n:
            raise ValueError("image ids, features, labels and descriptions must align")
        if len(set(self.image_ids)) != n:
            raise ValueError("duplicate image ids")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("label out of range")
        self._index = {img: i for i, img in enumerate(self.image_ids)}

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_dim(self) -> int:
        return int(self.features.shape[1])

    def index_of(self, image_id: str) -> int:
        return self._index[image_id]

    def indices(self, image_ids) -> np.ndarray:
        return np.array([self._index[i] for i in image_ids], dtype=np.int64)

    def images_of_class(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def examples(self, image_ids=None):
        """Yield one :class:`Example` per (image, description) pair."""
        idx = range(len(self.image_ids)) if image_ids is None else self.indices(image_ids)
        for i in idx:
            for desc in self.descriptions[i]:
                yield Example(self.image_ids[i], self.features[i], int(self.labels[i]), desc)

    def texts_of_class(self, label: int, image_ids=None) -> list[tuple[int, ...]]:
        idx = self.images_of_class(label)
        if image_ids is not None:
            allowed = set(self.indices(image_ids).tolist())
            idx = [i for i in idx if i in allowed]
        return [d for i in idx for d in self.descriptions[i]]


# -- feature matrix I/O ----------------------------------------------------------

def write_feature_matrix(path, features: np.ndarray) -> None:
    features = np.ascontiguousarray(features, dtype="<f4")
    n, d = features.shape
    Path(path).write_bytes(struct.pack("<II", n, d) + features.tobytes())


def read_feature_matrix(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        raise ValueError(f"{path}: truncated feature file")
    n, d = struct.unpack_from("<II", buf, 0)
    if len(buf) != 8 + 4 * n * d:
        raise ValueError(f"{path}: expected {n}x{d} floats, file size {len(buf)} disagrees")
    return np.frombuffer(buf, dtype="<f4", offset=8).reshape(n, d).astype(np.float32)


def write_feature_csv(path, image_ids, features: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for img, row in zip(image_ids, features):
            w.writerow([img, *(repr(float(v)) for v in row)])


def read_feature_csv(path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            ids.append(rec[0])
            rows.append([float(v) for v in rec[1:]])
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValueError(f"{path}: feature dimension mismatch across rows {sorted(widths)}")
    return ids, np.asarray(rows, dtype=np.float32)


# -- corpus I/O --------------------------------------------------------------------

def _read_labels(path) -> tuple[list[str], list[str], dict[str, str]]:
    ids, classes, names = [], [], {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        parts = line.split("\t") if "\t" in line else line.split(maxsplit=2)
        ids.append(parts[0].strip())
        classes.append(parts[1].strip())
        if len(parts) > 2:
            names[parts[1].strip()] = parts[2].strip()
    return ids, classes, names


def _class_order(class_ids) -> list[str]:
    uniq = set(class_ids)
    if all(c.lstrip("-").isdigit() for c in uniq):
        return sorted(uniq, key=int)
    return sorted(uniq)


def load_corpus(descriptions_path, features_path, labels_path) -> Corpus:
    img_ids, class_ids, names = _read_labels(labels_path)
    if not img_ids:
        raise ValueError(f"{labels_path}: no images")

    rows = []
    with open(descriptions_path, encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            if rec:
                if len(rec) < 3:
                    raise ValueError(f"{descriptions_path}: malformed row {rec!r}")
                rows.append((rec[0], rec[1], "\t".join(rec[2:])))
    if not rows:
        raise ValueError(f"{descriptions_path}: no descriptions")

    if str(features_path).endswith(".csv"):
        feat_ids, feats = read_feature_csv(features_path)
        if feat_ids != img_ids:
            missing = sorted(set(img_ids) ^ set(feat_ids))
            if missing:
                raise ValueError(f"image ids differ between labels and features: {missing[:20]}")
            order = {img: i for i, img in enumerate(feat_ids)}
            feats = feats[[order[i] for i in img_ids]]
    else:
        feats = read_feature_matrix(features_path)
        if feats.shape[0] != len(img_ids):
            raise ValueError(f"{features_path}: {feats.shape[0]} rows but {len(img_ids)} labelled images")

    order = _class_order(class_ids)
    cls_index = {c: i for i, c in enumerate(order)}
    label_of = dict(zip(img_ids, class_ids))
    desc_ids = {r[0] for r in rows}
    unknown = sorted(desc_ids - set(img_ids))
    if unknown:
        raise ValueError(f"descriptions reference unknown image ids: {unknown[:20]}")
    bad = sorted({r[0] for r in rows if label_of[r[0]] != r[1]})
    if bad:
        raise ValueError(f"class id disagrees between descriptions and labels for: {bad[:20]}")

    vocab = build_vocabulary(r[2] for r in rows)
    per_image: dict[str, list[tuple[int, ...]]] = {img: [] for img in img_ids}
    for img, _, text in rows:
        per_image[img].append(tuple(vocab.encode(tokenize(text))))

    return Corpus(
        image_ids=list(img_ids),
        features=feats,
        labels=np.array([cls_index[c] for c in class_ids], dtype=np.int64),
        descriptions=[per_image[img] for img in img_ids],
        class_names=[names.get(c, c) for c in order],
        vocab=vocab,
        meta={"class_ids": order},
    )


def save_corpus(corpus: Corpus, out_dir, feature_format: str = "bin") -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cls_ids = corpus.meta.get("class_ids", [str(i) for i in range(corpus.n_classes)])
    paths = {"descriptions": out / "descriptions.tsv", "labels": out / "labels.tsv"}
    with open(paths["descriptions"], "w", encoding="utf-8") as fh:
        for img, lab, descs in zip(corpus.image_ids, corpus.labels, corpus.descriptions):
            for d in descs:
                fh.write(f"{img}\t{cls_ids[lab]}\t{' '.join(corpus.vocab.decode(d))}\n")
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        for img, lab in zip(corpus.image_ids, corpus.labels):
            fh.write(f"{img}\t{cls_ids[lab]}\t{corpus.class_names[lab]}\n")
    if feature_format == "csv":
        paths["features"] = out / "features.csv"
        write_feature_csv(paths["features"], corpus.image_ids, corpus.features)
    else:
        paths["features"] = out / "features.bin"
        write_feature_matrix(paths["features"], corpus.features)
    return paths

"""The interpreter: a label-embedding classifier plus a text-to-class-embedding map.

Texts are encoded into a 768-d feature ``u`` by a small self-attention
encoder (mean-pooled, then projected), or looked up from precomputed text
features.  The interpretation module maps ``u`` into the class-embedding
space, ``v_hat = tanh(u W + b)``.  Training pulls ``v_hat`` towards the
embedding row of its class and away from randomly drawn other rows with a
margin cosine loss, jointly with the image classifier's cross-entropy.

At test time each unseen class's row of ``V`` is overwritten with the
interpretation of one description of that class, and images are ranked over
all classes.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import ClassifierConfig, class_logits, classify, init_classifier_params
from .data.corpus import Corpus, read_feature_matrix
from .data.folds import FoldSpec
from .data.vocab import PAD_ID, Vocabulary
from .describer import TrainingDiverged
from .metrics.ranking import macro_mean, rank_from_scores, true_ranks
from .neural import functional as F
from .neural.optim import AdamState, adam_step
from .neural.params import ParameterSet, normal_embedding, ones, uniform_fan_in, zeros
from .neural.tensor import Tensor, add, as_tensor, mul, reshape, take_rows, tanh, tsum
from .neural.transformer import block_forward, init_block_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class InterpreterHyper:
    emb_dim: int = 512
    h1: int = 256
    h2: int = 128
    text_dim: int = 768
    enc_dim: int = 128
    enc_layers: int = 2
    enc_heads: int = 4
    max_len: int = 32
    margin: float = 0.1
    aux_text_loss: float = 0.0
    install_norm: str = "seen"
    ce_classes: str = "seen"
    epochs: int = 25
    lr: float = 4e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    clip_norm: float | None = None
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ProvisionalClassTable:
    V: np.ndarray
    provisional: frozenset

    def copy(self) -> "ProvisionalClassTable":
        return ProvisionalClassTable(self.V.copy(), self.provisional)


@dataclass
class TextFeatureTable:
    """Precomputed text features keyed by description id (``image_id#index``)."""
    keys: list[str]
    features: np.ndarray

    def __post_init__(self):
        self._index = {k: i for i, k in enumerate(self.keys)}

    def __contains__(self, key) -> bool:
        return key in self._index

    def lookup(self, keys) -> np.ndarray:
        missing = [k for k in keys if k not in self._index]
        if missing:
            raise KeyError(f"no text features for {missing[:10]}")
        return self.features[[self._index[k] for k in keys]]

    @classmethod
    def load(cls, features_path, keys_path) -> "TextFeatureTable":
        feats = read_feature_matrix(features_path)
        keys = [ln.strip() for ln in open(keys_path, encoding="utf-8") if ln.strip()]
        if len(keys) != feats.shape[0]:
            raise ValueError(f"{len(keys)} keys but {feats.shape[0]} feature rows")
        return cls(keys, feats)


def description_key(image_id: str, index: int) -> str:
    return f"{image_id}#{index}"


def sample_training_target(label: int, n_classes: int, rng: np.random.Generator) -> tuple[int, bool]:
    """Half the time the example's own class, otherwise a uniformly drawn other class."""
    if n_classes < 2:
        raise ValueError("negative sampling needs at least two classes")
    if rng.random() < 0.5:
        return label, True
    k = int(rng.integers(n_classes - 1))
    return (k + 1 if k >= label else k), False


class Interpreter:
    def __init__(self, vocab: Vocabulary, n_classes: int, feature_dim: int,
                 hyper: InterpreterHyper = InterpreterHyper(), params: ParameterSet | None = None,
                 text_features: TextFeatureTable | None = None):
        self.vocab = vocab
        self.hyper = hyper
        self.text_features = text_features
        self.cls_cfg = ClassifierConfig(feature_dim, n_classes, hyper.emb_dim, hyper.h1, hyper.h2)
        if hyper.enc_dim % hyper.enc_heads:
            raise ValueError("enc_dim must be divisible by enc_heads")
        if params is None:
            rng = np.random.default_rng([hyper.seed, 13])
            params = init_classifier_params(self.cls_cfg, rng)
            params.add("txt.tok_emb", normal_embedding(rng, len(vocab), hyper.enc_dim))
            params.add("txt.pos_emb", normal_embedding(rng, hyper.max_len, hyper.enc_dim))
            for i in range(hyper.enc_layers):
                init_block_params(params, f"txt.layer{i}", hyper.enc_dim, 4, rng)
            params.add("txt.ln_f.g", ones(hyper.enc_dim))
            params.add("txt.ln_f.b", zeros(hyper.enc_dim))
            params.add("txt.proj.w", uniform_fan_in(rng, hyper.enc_dim, hyper.text_dim))
            params.add("txt.proj.b", zeros(hyper.text_dim))
            params.add("ipt.W", uniform_fan_in(rng, hyper.text_dim, hyper.emb_dim))
            params.add("ipt.b", zeros(hyper.emb_dim))
            if hyper.aux_text_loss:
                params.add("aux.W", uniform_fan_in(rng, hyper.text_dim, n_classes))
                params.add("aux.b", zeros(n_classes))
        self.params = params

    @property
    def n_classes(self) -> int:
        return self.cls_cfg.n_classes

    # -- text side ----------------------------------------------------------------
    def encode_tokens(self, seqs, p=None) -> Tensor:
        """Mean-pooled encoder features (B, text_dim) for token-id sequences."""
        p = self.params if p is None else p
        if any(len(s) == 0 for s in seqs):
            raise ValueError("cannot encode an empty description")
        seqs = [tuple(s)[: self.hyper.max_len] for s in seqs]
        t = max(len(s) for s in seqs)
        toks = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
        for i, s in enumerate(seqs):
            toks[i, : len(s)] = s
        mask = toks != PAD_ID
        x = add(take_rows(p["txt.tok_emb"], toks), p["txt.pos_emb"][:t])
        for i in range(self.hyper.enc_layers):
            x = block_forward(x, p, f"txt.layer{i}", self.hyper.enc_heads, causal=False, key_mask=mask)
        x = F.layer_norm(x, p["txt.ln_f.g"], p["txt.ln_f.b"])
        weights = (mask / mask.sum(axis=1, keepdims=True)).astype(x.dtype)
        pooled = tsum(mul(x, weights[:, :, None]), axis=1)
        return F.linear(pooled, p["txt.proj.w"], p["txt.proj.b"])

    def encode_text(self, tokens, p=None) -> np.ndarray:
        p = self.params.detached() if p is None else p
        return self.encode_tokens([tuple(tokens)], p).data[0]

    def text_features_for(self, items, p=None) -> Tensor:
        """Items are token sequences, or description keys when a feature table is attached."""
        if self.text_features is not None and all(isinstance(i, str) for i in items):
            return Tensor(self.text_features.lookup(items))
        return self.encode_tokens(items, p)

    def interpret_features(self, u, p=None) -> Tensor:
        p = self.params if p is None else p
        u = as_tensor(u)
        if u.shape[-1] != self.hyper.text_dim:
            raise ValueError(f"text feature dim {u.shape[-1]} != {self.hyper.text_dim}")
        return tanh(F.linear(u, p["ipt.W"], p["ipt.b"]))

    def interpret(self, u, p=None) -> np.ndarray:
        p = self.params.detached() if p is None else p
        return self.interpret_features(u, p).data

    # -- loss -----------------------------------------------------------------------
    def loss(self, features, labels, texts, targets, positives, p=None, classes=None) -> Tensor:
        """Batch mean of classifier CE + cosine embedding loss (+ optional text CE).

        ``classes`` restricts the CE softmax to those rows of ``V``; labels
        must then lie in it.
        """
        p = self.params if p is None else p
        labels = np.asarray(labels, dtype=np.int64)
        b = len(labels)
        if classes is None:
            ce = F.cross_entropy(class_logits(Tensor(features), p, self.cls_cfg), labels, reduction="sum")
        else:
            classes = np.asarray(classes, dtype=np.int64)
            remap = np.full(self.n_classes, -1, dtype=np.int64)
            remap[classes] = np.arange(len(classes))
            if np.any(remap[labels] < 0):
                raise ValueError("label outside the CE class subset")
            logits = class_logits(Tensor(features), p, self.cls_cfg, V=take_rows(p["emb.V"], classes))
            ce = F.cross_entropy(logits, remap[labels], reduction="sum")
        u = self.text_features_for(texts, p)
        v_hat = self.interpret_features(u, p)
        v_k = take_rows(p["emb.V"], np.asarray(targets, dtype=np.int64))
        cos = F.cosine_embedding_loss(v_hat, v_k, positives, self.hyper.margin)
        total = ce + tsum(cos)
        if self.hyper.aux_text_loss:
            aux = F.cross_entropy(F.linear(u, p["aux.W"], p["aux.b"]), labels, reduction="sum")
            total = total + aux * self.hyper.aux_text_loss
        return total * (1.0 / b)

    # -- zero-shot use ---------------------------------------------------------------
    def install_unseen(self, descriptions: dict, unseen, V=None) -> ProvisionalClassTable:
        """Overwrite the rows of ``unseen`` classes with interpreted descriptions.

        With ``install_norm="seen"`` each interpreted vector is rescaled to the
        mean norm of the remaining rows.  Returns a new table; the
        interpreter's own parameters are untouched.
        """
        unseen = sorted(int(c) for c in unseen)
        missing = [c for c in unseen if c not in descriptions]
        if missing:
            raise ValueError(f"missing descriptions for classes {missing}")
        base = self.params["emb.V"].data if V is None else np.asarray(V)
        table = base.copy()
        det = self.params.detached()
        if unseen:
            u = self.text_features_for([descriptions[c] for c in unseen], det)
            v_hat = self.interpret_features(u, det).data
            if self.hyper.install_norm == "seen":
                # only the direction of v_hat is trained; borrow the learned rows' scale
                kept = np.setdiff1d(np.arange(len(table)), unseen)
                scale = np.linalg.norm(base[kept], axis=1).mean() if len(kept) else 1.0
                v_hat = v_hat / np.linalg.norm(v_hat, axis=1, keepdims=True) * scale
            elif self.hyper.install_norm != "none":
                raise ValueError(f"unknown install_norm {self.hyper.install_norm!r}")
            table[unseen] = v_hat
        return ProvisionalClassTable(table, frozenset(unseen))

    def scores(self, features, table: ProvisionalClassTable | None = None) -> np.ndarray:
        V = None if table is None else table.V
        probs = classify(np.asarray(features), self.params, self.cls_cfg, V=V)
        return probs

    def rank_classes(self, features, table: ProvisionalClassTable | None = None) -> np.ndarray:
        """Classes by descending probability, ties to the lower class id."""
        return rank_from_scores(self.scores(features, table))

    # -- persistence --------------------------------------------------------------------
    def meta(self) -> dict:
        return {"vocab": self.vocab.to_list(), "n_classes": self.n_classes,
                "feature_dim": self.cls_cfg.feature_dim, "hyper": self.hyper.to_json()}

    @classmethod
    def from_state(cls, meta: dict, state: dict) -> "Interpreter":
        ipt = cls(Vocabulary.from_list(meta["vocab"]), meta["n_classes"], meta["feature_dim"],
                  InterpreterHyper(**meta["hyper"]))
        ipt.params.load_state(state)
        return ipt


@dataclass
class ZeroShotResult:
    """Per-item outcome of ranking images over all classes."""
    labels: np.ndarray
    ranks: np.ndarray
    true_prob: np.ndarray

    def metric_items(self) -> dict[str, np.ndarray]:
        return {
            "mean_rank": self.ranks.astype(np.float64),
            "acc@1": 100.0 * (self.ranks <= 1),
            "acc@5": 100.0 * (self.ranks <= 5),
            "acc@10": 100.0 * (self.ranks <= 10),
            "ce": -np.log(np.maximum(self.true_prob, 1e-300)),
        }

    def macro(self) -> dict[str, float]:
        return {k: macro_mean(v, self.labels)[0] for k, v in self.metric_items().items()}

    def per_class(self) -> dict[str, dict[int, float]]:
        return {k: macro_mean(v, self.labels)[1] for k, v in self.metric_items().items()}


def evaluate_zero_shot(ipt: Interpreter, corpus: Corpus, image_ids, table: ProvisionalClassTable | None) -> ZeroShotResult:
    idx = corpus.indices(image_ids)
    labels = corpus.labels[idx]
    probs = ipt.scores(corpus.features[idx], table)
    ranks = true_ranks(rank_from_scores(probs), labels)
    return ZeroShotResult(labels, ranks, probs[np.arange(len(idx)), labels])


def sample_class_descriptions(corpus: Corpus, classes, image_ids, rng: np.random.Generator,
                              keys: bool = False) -> dict[int, tuple]:
    """One randomly chosen description per class from the given images."""
    allowed = corpus.indices(image_ids)
    out = {}
    for c in sorted(int(x) for x in classes):
        pool = [(corpus.image_ids[i], j, d) for i in allowed if corpus.labels[i] == c
                for j, d in enumerate(corpus.descriptions[i])]
        if not pool:
            raise ValueError(f"class {c} has no descriptions to sample from")
        img, j, d = pool[int(rng.integers(len(pool)))]
        out[c] = description_key(img, j) if keys else d
    return out


@dataclass
class InterpreterRun:
    interpreter: Interpreter
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    unseen_images_touched: int = 0
    initial_val_mean_rank: float = float("nan")


def train_interpreter(corpus: Corpus, fold: FoldSpec, hyper: InterpreterHyper = InterpreterHyper(),
                      val_descriptions: dict | None = None,
                      text_features: TextFeatureTable | None = None,
                      on_epoch=None) -> InterpreterRun:
    """Joint training on seen-class training examples; the epoch with the best
    validation zero-shot mean rank of unseen classes is kept.

    ``val_descriptions`` maps each unseen class to the one description used
    for validation; by default one is sampled from the class's training images.
    """
    ipt = Interpreter(corpus.vocab, corpus.n_classes, corpus.feature_dim, hyper, text_features=text_features)
    run = InterpreterRun(ipt)
    seen = set(fold.seen)
    examples = []
    for i in corpus.indices(fold.train):
        if int(corpus.labels[i]) not in seen:
            continue
        for j, d in enumerate(corpus.descriptions[i]):
            text = description_key(corpus.image_ids[i], j) if text_features is not None else d
            examples.append((int(i), text))
    rng = np.random.default_rng([hyper.seed, 17])
    if val_descriptions is None:
        val_descriptions = sample_class_descriptions(corpus, fold.unseen, fold.train, rng,
                                                     keys=text_features is not None)
    val_unseen = [img for img in fold.val if int(corpus.labels[corpus.index_of(img)]) not in seen]

    def val_rank() -> float:
        table = ipt.install_unseen(val_descriptions, fold.unseen)
        return evaluate_zero_shot(ipt, corpus, val_unseen, table).macro()["mean_rank"]

    run.initial_val_mean_rank = val_rank()
    if hyper.ce_classes == "seen":
        ce_classes = np.array(sorted(seen))
    elif hyper.ce_classes == "all":
        ce_classes = None
    else:
        raise ValueError(f"unknown ce_classes {hyper.ce_classes!r}")
    opt = AdamState(lr=hyper.lr, weight_decay=hyper.weight_decay)
    best, best_state = np.inf, None
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(examples))
        total = 0.0
        for start in range(0, len(order), hyper.batch_size):
            batch = [examples[j] for j in order[start:start + hyper.batch_size]]
            idx = np.array([e[0] for e in batch])
            labels = corpus.labels[idx]
            if any(int(c) not in seen for c in labels):
                run.unseen_images_touched += 1
                raise ValueError("unseen-class example offered to interpreter training")
            draws = [sample_training_target(int(c), corpus.n_classes, rng) for c in labels]
            loss = ipt.loss(corpus.features[idx], labels, [e[1] for e in batch],
                            [k for k, _ in draws], [pos for _, pos in draws], classes=ce_classes)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, value)
            loss.backward()
            adam_step(ipt.params, opt, hyper.clip_norm)
            total += value * len(batch)
        score = val_rank()
        run.log.append({"epoch": epoch, "loss": total / len(examples), "val_mean_rank": score})
        log.info("interpreter fold %d epoch %d loss %.4f val unseen mean rank %.2f",
                 fold.fold_id, epoch, total / len(examples), score)
        if on_epoch is not None:
            on_epoch(epoch, ipt)
        if score < best:
            best, run.best_epoch, best_state = score, epoch, ipt.params.state()
    if best_state is not None:
        ipt.params.load_state(best_state)
    return run

"""The describer: a label-embedding classifier plus a class-conditioned decoder.

The decoder is conditioned on one of three class representations:

* ``prototype`` -- the class's row of the label embedding ``V``;
* ``exemplar`` -- the features of the training image the classifier is most
  confident belongs to the class (refreshed after every epoch);
* ``both`` -- the two concatenated.

Classifier and decoder train jointly: classifier cross-entropy on every
training example, plus summed token cross-entropy under teacher forcing on
examples whose description is available (seen classes only).
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifier import ClassifierConfig, class_logits, classify, init_classifier_params
from .data.corpus import Corpus
from .data.folds import FoldSpec
from .data.vocab import BOS_ID, EOS_ID, PAD_ID, Vocabulary
from .decoding import DecodeConfig, Hypothesis, decode
from .metrics.cider import cider
from .neural import functional as F
from .neural.optim import AdamState, adam_step
from .neural.params import ParameterSet
from .neural.tensor import Tensor, concat, take_rows
from .neural.transformer import DecoderConfig, decoder_logits, init_decoder_params

log = logging.getLogger(__name__)

MODES = ("prototype", "exemplar", "both")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class DescriberHyper:
    emb_dim: int = 512
    h1: int = 256
    h2: int = 128
    d_model: int = 128
    n_layers: int = 6
    n_heads: int = 8
    ff_mult: int = 4
    max_len: int = 32
    epochs: int = 20
    lr: float = 4e-4
    batch_size: int = 32
    weight_decay: float = 0.0
    clip_norm: float | None = None
    val_beam_width: int = 2
    seed: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExemplarCache:
    features: np.ndarray          # (n_classes, feature_dim)
    image_ids: list[str]
    epoch: int = 0

    def copy(self) -> "ExemplarCache":
        return ExemplarCache(self.features.copy(), list(self.image_ids), self.epoch)


@dataclass
class TrainingCounters:
    decoder_examples: int = 0
    decoder_unseen_examples: int = 0
    classifier_examples: int = 0
    cache_refreshes: int = 0


def cond_dim(mode: str, emb_dim: int, feature_dim: int) -> int:
    if mode == "prototype":
        return emb_dim
    if mode == "exemplar":
        return feature_dim
    if mode == "both":
        return emb_dim + feature_dim
    raise ValueError(f"unknown class representation {mode!r}")


class Describer:
    def __init__(self, mode: str, vocab: Vocabulary, n_classes: int, feature_dim: int,
                 hyper: DescriberHyper = DescriberHyper(), params: ParameterSet | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown class representation {mode!r}")
        self.mode = mode
        self.vocab = vocab
        self.hyper = hyper
        self.cls_cfg = ClassifierConfig(feature_dim, n_classes, hyper.emb_dim, hyper.h1, hyper.h2)
        self.dec_cfg = DecoderConfig(
            vocab_size=len(vocab), cond_dim=cond_dim(mode, hyper.emb_dim, feature_dim),
            d_model=hyper.d_model, n_layers=hyper.n_layers, n_heads=hyper.n_heads,
            ff_mult=hyper.ff_mult, max_len=hyper.max_len,
        )
        if params is None:
            rng = np.random.default_rng([hyper.seed, 7])
            params = init_classifier_params(self.cls_cfg, rng)
            init_decoder_params(self.dec_cfg, rng, params)
        self.params = params
        self.cache: ExemplarCache | None = None

    # -- class representations ------------------------------------------------
    def prototype_rep(self, label: int, p=None) -> Tensor:
        V = (self.params if p is None else p)["emb.V"]
        if not 0 <= label < V.shape[0]:
            raise IndexError(f"class {label} out of range")
        return V[label]

    def exemplar_rep(self, label: int) -> np.ndarray:
        if self.cache is None:
            raise RuntimeError("exemplar cache is empty")
        return self.cache.features[label]

    def both_rep(self, label: int, p=None) -> np.ndarray:
        return np.concatenate([self.prototype_rep(label, p).data, self.exemplar_rep(label)])

    def class_reps(self, labels, p=None) -> Tensor:
        """Batch of decoder conditioning vectors; exemplar parts are constants."""
        p = self.params if p is None else p
        labels = np.asarray(labels, dtype=np.int64)
        if self.mode == "prototype":
            return take_rows(p["emb.V"], labels)
        if self.cache is None:
            raise RuntimeError("exemplar cache is empty")
        ex = Tensor(self.cache.features[labels])
        if self.mode == "exemplar":
            return ex
        return concat([take_rows(p["emb.V"], labels), ex], axis=1)

    # -- loss --------------------------------------------------------------------
    def loss(self, features: np.ndarray, labels, token_seqs, has_description, p=None,
             counters: TrainingCounters | None = None, unseen=frozenset()) -> Tensor:
        """Mean over the batch of classifier CE plus summed decoder token CE."""
        p = self.params if p is None else p
        labels = np.asarray(labels, dtype=np.int64)
        has_description = np.asarray(has_description, dtype=bool)
        b = len(labels)
        total = F.cross_entropy(class_logits(Tensor(features), p, self.cls_cfg), labels, reduction="sum")
        rows = np.flatnonzero(has_description)
        if counters is not None:
            counters.classifier_examples += b
        if len(rows):
            seqs = [token_seqs[i] for i in rows]
            if any(len(s) == 0 for s in seqs):
                raise ValueError("empty description for an example marked as described")
            inputs, targets = teacher_forcing_batch(seqs, self.hyper.max_len)
            logits = decoder_logits(inputs, self.class_reps(labels[rows], p), p, self.dec_cfg)
            total = total + F.cross_entropy(logits, targets, reduction="sum", ignore_index=PAD_ID)
            if counters is not None:
                counters.decoder_examples += len(rows)
                counters.decoder_unseen_examples += int(sum(int(labels[i]) in unseen for i in rows))
        return total * (1.0 / b)

    # -- exemplar cache -------------------------------------------------------------
    def update_exemplar_cache(self, corpus: Corpus, train_ids, epoch: int = 0) -> ExemplarCache:
        self.cache = select_exemplars(self.params, self.cls_cfg, corpus, train_ids, epoch)
        return self.cache

    # -- generation ----------------------------------------------------------------
    def step_fn(self, label: int, p=None):
        p = self.params.detached() if p is None else p
        rep = self.class_reps([label], p).data[0]

        def step(prefixes):
            out = np.empty((len(prefixes), self.dec_cfg.vocab_size))
            by_len: dict[int, list[int]] = {}
            for i, pre in enumerate(prefixes):
                by_len.setdefault(len(pre), []).append(i)
            for length, idx in by_len.items():
                toks = np.array([(BOS_ID,) + tuple(prefixes[i]) for i in idx], dtype=np.int64)
                cond = Tensor(np.repeat(rep[None], len(idx), axis=0))
                logits = decoder_logits(toks, cond, p, self.dec_cfg).data[:, -1, :]
                out[idx] = F.log_softmax(Tensor(logits.astype(np.float64)), axis=-1).data
            return out

        return step

    def generate(self, label: int, config: DecodeConfig, rng=None, p=None) -> Hypothesis:
        if config.max_len > self.dec_cfg.max_len:
            config = DecodeConfig(**{**config.to_json(), "max_len": self.dec_cfg.max_len})
        return decode(self.step_fn(label, p), config, rng)

    def generate_description(self, label: int, config: DecodeConfig, rng=None) -> list[str]:
        return self.vocab.decode(self.generate(label, config, rng).tokens)

    # -- persistence ---------------------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        state = self.params.state()
        if self.cache is not None:
            state["cache.exemplars"] = self.cache.features.copy()
        return state

    def meta(self) -> dict:
        return {
            "mode": self.mode,
            "vocab": self.vocab.to_list(),
            "n_classes": self.cls_cfg.n_classes,
            "feature_dim": self.cls_cfg.feature_dim,
            "hyper": self.hyper.to_json(),
            "cache_image_ids": None if self.cache is None else self.cache.image_ids,
            "cache_epoch": None if self.cache is None else self.cache.epoch,
        }

    @classmethod
    def from_state(cls, meta: dict, state: dict[str, np.ndarray]) -> "Describer":
        hyper = DescriberHyper(**meta["hyper"])
        d = cls(meta["mode"], Vocabulary.from_list(meta["vocab"]), meta["n_classes"], meta["feature_dim"], hyper)
        d.params.load_state({k: v for k, v in state.items() if k != "cache.exemplars"})
        if "cache.exemplars" in state:
            d.cache = ExemplarCache(np.asarray(state["cache.exemplars"], dtype=np.float32),
                                    list(meta["cache_image_ids"]), int(meta["cache_epoch"]))
        return d


def teacher_forcing_batch(seqs, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Pad descriptions into decoder inputs ``[BOS, w1..wn]`` and targets ``[w1..wn, EOS]``.

    Descriptions longer than ``max_len - 1`` tokens are truncated so that the
    EOS target always fits.
    """
    seqs = [tuple(s)[: max_len - 1] for s in seqs]
    t = max(len(s) for s in seqs) + 1
    inputs = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
    targets = np.full((len(seqs), t), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        inputs[i, : len(s) + 1] = (BOS_ID, *s)
        targets[i, : len(s) + 1] = (*s, EOS_ID)
    return inputs, targets


def select_exemplars(params, cls_cfg: ClassifierConfig, corpus: Corpus, train_ids, epoch: int = 0) -> ExemplarCache:
    """For every class, the training image of that class with the highest predicted probability.

    Ties go to the lexicographically smallest image id.
    """
    idx = corpus.indices(train_ids)
    probs = classify(corpus.features[idx], params, cls_cfg)
    labels = corpus.labels[idx]
    feats = np.zeros((cls_cfg.n_classes, cls_cfg.feature_dim), dtype=np.float32)
    chosen: list[str] = []
    for c in range(cls_cfg.n_classes):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            raise ValueError(f"class {c} has no candidate training images for an exemplar")
        scores = probs[members, c]
        best = members[scores == scores.max()]
        winner = min(best, key=lambda m: corpus.image_ids[idx[m]])
        feats[c] = corpus.features[idx[winner]]
        chosen.append(corpus.image_ids[idx[winner]])
    return ExemplarCache(feats, chosen, epoch)


@dataclass
class DescriberRun:
    describer: Describer
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    counters: TrainingCounters = field(default_factory=TrainingCounters)


def training_triples(corpus: Corpus, fold: FoldSpec):
    """(image index, description or (), described?) for every training example.

    Unseen-class images contribute one example per description with the
    description withheld.
    """
    unseen = set(fold.unseen)
    out = []
    for i in corpus.indices(fold.train):
        described = int(corpus.labels[i]) not in unseen
        for d in corpus.descriptions[i]:
            out.append((int(i), d if described else (), described))
    return out


def validation_cider(describer: Describer, corpus: Corpus, fold: FoldSpec, beam_width: int) -> float:
    """CIDEr of one beam-searched description per seen class against its validation descriptions."""
    cfg = DecodeConfig("beam", beam_width=beam_width, max_len=describer.hyper.max_len)
    p = describer.params.detached()
    cands, refs = [], []
    for c in fold.seen:
        ref = corpus.texts_of_class(c, fold.val)
        if not ref:
            continue
        hyp = describer.generate(c, cfg, p=p)
        cands.append(describer.vocab.decode(hyp.tokens))
        refs.append([describer.vocab.decode(r) for r in ref])
    return cider(cands, refs)


def train_describer(corpus: Corpus, fold: FoldSpec, mode: str, hyper: DescriberHyper = DescriberHyper()) -> DescriberRun:
    describer = Describer(mode, corpus.vocab, corpus.n_classes, corpus.feature_dim, hyper)
    run = DescriberRun(describer)
    triples = training_triples(corpus, fold)
    unseen = frozenset(fold.unseen)
    rng = np.random.default_rng([hyper.seed, 11])
    opt = AdamState(lr=hyper.lr, weight_decay=hyper.weight_decay)
    if mode != "prototype":
        describer.update_exemplar_cache(corpus, fold.train, epoch=0)
        run.counters.cache_refreshes += 1

    best_score, best_state = -np.inf, None
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(len(triples))
        total, n = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            batch = [triples[j] for j in order[start:start + hyper.batch_size]]
            idx = np.array([t[0] for t in batch])
            loss = describer.loss(corpus.features[idx], corpus.labels[idx], [t[1] for t in batch],
                                  [t[2] for t in batch], counters=run.counters, unseen=unseen)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, value)
            loss.backward()
            adam_step(describer.params, opt, hyper.clip_norm)
            total += value * len(batch)
            n += len(batch)
        if mode != "prototype":
            describer.update_exemplar_cache(corpus, fold.train, epoch=epoch)
            run.counters.cache_refreshes += 1
        score = validation_cider(describer, corpus, fold, hyper.val_beam_width)
        run.log.append({"epoch": epoch, "loss": total / n, "val_cider": score})
        log.info("describer[%s] fold %d epoch %d loss %.4f val CIDEr %.3f", mode, fold.fold_id, epoch, total / n, score)
        if score > best_score:
            best_score, run.best_epoch = score, epoch
            best_state = (describer.params.state(), None if describer.cache is None else describer.cache.copy())
    describer.params.load_state(best_state[0])
    describer.cache = best_state[1]
    return run

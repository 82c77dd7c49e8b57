"""Experiment orchestration: folds, both models, installation and reporting.

A run trains one interpreter per fold and one describer per (fold, mode),
generates one description per unseen class for every (mode, decode) pair,
and scores zero-shot classification with each description set plus a
sampled ground-truth set.  Values are macro-averaged over classes within a
fold, then mean and standard deviation are taken over folds.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data.corpus import Corpus, load_corpus
from .data.folds import FoldSpec, load_folds, make_folds, split_by_seen
from .data.synthetic import SyntheticWorldConfig, generate_synthetic_world
from .data.vocab import UNK_ID
from .decoding import DecodeConfig
from .describer import MODES, DescriberHyper, train_describer
from .interpreter import InterpreterHyper, evaluate_zero_shot, sample_class_descriptions, train_interpreter
from .metrics.bleu import bleu
from .metrics.cider import cider
from .metrics.discriminativity import DiscriminativityStats, Lexicons

log = logging.getLogger(__name__)

GROUND_TRUTH = "ground_truth"
ZERO_SHOT_METRICS = ("ce", "mean_rank", "acc@1", "acc@5", "acc@10")
GENERATION_METRICS = ("bleu1", "bleu4", "cider", "bleu1_per_class", "bleu4_per_class", "cider_per_class",
                      "bleu1_per_image", "bleu4_per_image", "cider_per_image", "disc_mean", "disc_max")
POOLINGS = ("per_class", "per_image")


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class FoldError(RuntimeError):
    def __init__(self, fold_id: int, stage: str, cause: BaseException):
        super().__init__(f"fold {fold_id} failed in stage {stage!r}: {cause}")
        self.fold_id = fold_id
        self.stage = stage
        self.cause = cause


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _dataclass_from(cls, data, what: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{what} must be a JSON object")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"unknown {what} keys: {extra}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: dict
    n_folds: int = 5
    n_unseen: int = 20
    run_folds: tuple | None = None
    folds_file: str | None = None
    modes: tuple = MODES
    decodes: tuple = (DecodeConfig("beam", beam_width=2),)
    describer: DescriberHyper = DescriberHyper()
    interpreter: InterpreterHyper = InterpreterHyper()
    reference_pooling: str = "per_class"
    lexicons: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.corpus, dict) or not self.corpus:
            raise ConfigError("corpus must name a synthetic world or three files")
        if "synthetic" in self.corpus:
            if set(self.corpus) != {"synthetic"}:
                raise ConfigError("a synthetic corpus takes no other keys")
        elif set(self.corpus) != {"descriptions", "features", "labels"}:
            raise ConfigError("file corpus needs exactly: descriptions, features, labels")
        else:
            for key, path in self.corpus.items():
                if not Path(path).is_file():
                    raise ConfigError(f"corpus {key} file not found: {path}")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown modes {bad}; choose from {list(MODES)}")
        if len(set(self.modes)) != len(self.modes):
            raise ConfigError("duplicate modes")
        methods = [d.method for d in self.decodes]
        if len(set(methods)) != len(methods):
            raise ConfigError("decode configs must use distinct methods")
        if self.modes and not self.decodes:
            raise ConfigError("modes given without any decode config")
        if self.reference_pooling not in POOLINGS:
            raise ConfigError(f"reference_pooling must be one of {list(POOLINGS)}")
        if self.n_folds < 1 or self.n_unseen < 1:
            raise ConfigError("n_folds and n_unseen must be positive")
        if self.folds_file is not None and not Path(self.folds_file).is_file():
            raise ConfigError(f"folds file not found: {self.folds_file}")
        if self.lexicons is not None:
            if set(self.lexicons) != {"nouns", "adjectives"}:
                raise ConfigError("lexicons needs exactly: nouns, adjectives")
            for path in self.lexicons.values():
                if not Path(path).is_file():
                    raise ConfigError(f"lexicon file not found: {path}")

    @classmethod
    def from_json(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown experiment keys: {extra}")
        if "corpus" not in data:
            raise ConfigError("missing required key: corpus")
        base = Path(base_dir) if base_dir is not None else None

        def resolve(p):
            if not isinstance(p, str):
                raise ConfigError(f"expected a path string, got {p!r}")
            return str(base / p) if base is not None and not Path(p).is_absolute() else p

        kw = dict(data)
        corpus = kw["corpus"]
        if isinstance(corpus, dict) and "synthetic" in corpus:
            _dataclass_from(SyntheticWorldConfig, corpus["synthetic"], "synthetic world")
            kw["corpus"] = {"synthetic": dict(corpus["synthetic"])}
        elif isinstance(corpus, dict):
            kw["corpus"] = {k: resolve(v) for k, v in corpus.items()}
        if kw.get("folds_file") is not None:
            kw["folds_file"] = resolve(kw["folds_file"])
        if kw.get("lexicons") is not None:
            if not isinstance(kw["lexicons"], dict):
                raise ConfigError("lexicons must be a JSON object")
            kw["lexicons"] = {k: resolve(v) for k, v in kw["lexicons"].items()}
        if "modes" in kw:
            kw["modes"] = tuple(kw["modes"])
        if "decodes" in kw:
            kw["decodes"] = tuple(_dataclass_from(DecodeConfig, d, "decode") for d in kw["decodes"])
        if kw.get("run_folds") is not None:
            kw["run_folds"] = tuple(int(f) for f in kw["run_folds"])
        if "describer" in kw:
            kw["describer"] = _dataclass_from(DescriberHyper, kw["describer"], "describer")
        if "interpreter" in kw:
            kw["interpreter"] = _dataclass_from(InterpreterHyper, kw["interpreter"], "interpreter")
        for key in ("n_folds", "n_unseen", "seed"):
            if key in kw and (not isinstance(kw[key], int) or isinstance(kw[key], bool)):
                raise ConfigError(f"{key} must be an integer")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_json(data, base_dir=path.parent)

    def to_json(self) -> dict:
        return {
            "corpus": self.corpus,
            "n_folds": self.n_folds,
            "n_unseen": self.n_unseen,
            "run_folds": None if self.run_folds is None else list(self.run_folds),
            "folds_file": self.folds_file,
            "modes": list(self.modes),
            "decodes": [d.to_json() for d in self.decodes],
            "describer": self.describer.to_json(),
            "interpreter": self.interpreter.to_json(),
            "reference_pooling": self.reference_pooling,
            "lexicons": self.lexicons,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build_corpus(config: ExperimentConfig) -> Corpus:
    if "synthetic" in config.corpus:
        return generate_synthetic_world(SyntheticWorldConfig.from_json(config.corpus["synthetic"]))
    c = config.corpus
    return load_corpus(c["descriptions"], c["features"], c["labels"])


def build_folds(config: ExperimentConfig, corpus: Corpus) -> list[FoldSpec]:
    if config.folds_file is not None:
        folds = load_folds(config.folds_file)
    else:
        folds = make_folds(corpus, config.n_folds, config.n_unseen, seed=config.seed)
    if config.run_folds is not None:
        by_id = {f.fold_id: f for f in folds}
        missing = [f for f in config.run_folds if f not in by_id]
        if missing:
            raise ConfigError(f"run_folds refers to unknown folds {missing}")
        folds = [by_id[f] for f in config.run_folds]
    return folds


def build_lexicons(config: ExperimentConfig, corpus: Corpus) -> Lexicons:
    if config.lexicons is not None:
        return Lexicons.from_files(config.lexicons["nouns"], config.lexicons["adjectives"])
    return Lexicons.bird().extended(corpus.meta.get("nouns", ()), corpus.meta.get("adjectives", ()))


def condition_names(config: ExperimentConfig) -> list[str]:
    return [GROUND_TRUTH] + [f"{m}/{d.method}" for m in config.modes for d in config.decodes]


def class_id(corpus: Corpus, label: int) -> str:
    return corpus.meta.get("class_ids", [str(i) for i in range(corpus.n_classes)])[label]


# -- scoring -----------------------------------------------------------------------

def generation_metrics(corpus: Corpus, fold: FoldSpec, descriptions: dict[int, tuple],
                       stats: DiscriminativityStats, lexicons: Lexicons, pooling: str) -> dict[str, float]:
    """BLEU/CIDEr against unseen-class test references under both poolings, plus discriminativity."""
    words = {c: corpus.vocab.decode(d) for c, d in descriptions.items()}
    classes = sorted(words)
    test_idx = corpus.indices(fold.test)
    out = {}
    cands = [words[c] for c in classes]
    refs = [[corpus.vocab.decode(r) for r in corpus.texts_of_class(c, fold.test)] for c in classes]
    out["bleu1_per_class"] = bleu(cands, refs, max_n=1)
    out["bleu4_per_class"] = bleu(cands, refs, max_n=4)
    out["cider_per_class"] = cider(cands, refs)
    cands, refs = [], []
    for c in classes:
        for i in test_idx[corpus.labels[test_idx] == c]:
            cands.append(words[c])
            refs.append([corpus.vocab.decode(r) for r in corpus.descriptions[i]])
    out["bleu1_per_image"] = bleu(cands, refs, max_n=1)
    out["bleu4_per_image"] = bleu(cands, refs, max_n=4)
    out["cider_per_image"] = cider(cands, refs)
    for key in ("bleu1", "bleu4", "cider"):
        out[key] = out[f"{key}_{pooling}"]
    discs = [stats.disc_description(words[c], lexicons) for c in classes]
    out["disc_max"] = float(np.mean([d[0] for d in discs]))
    out["disc_mean"] = float(np.mean([d[1] for d in discs]))
    return out


def disc_stats(corpus: Corpus, fold: FoldSpec, lexicons: Lexicons) -> DiscriminativityStats:
    idx = corpus.indices(fold.test)
    return DiscriminativityStats.from_texts(
        ((int(corpus.labels[i]), corpus.vocab.decode(d)) for i in idx for d in corpus.descriptions[i]), lexicons)


def zero_shot_block(ipt, corpus: Corpus, fold: FoldSpec, table) -> dict:
    seen_ids, unseen_ids = split_by_seen(corpus, fold, "test")
    block = {}
    for name, ids in (("seen", seen_ids), ("unseen", unseen_ids)):
        res = evaluate_zero_shot(ipt, corpus, ids, table)
        per_class = res.per_class()
        block[name] = {k: v for k, v in res.macro().items()}
        block[f"{name}_per_class"] = {m: {class_id(corpus, c): v for c, v in vals.items()}
                                      for m, vals in per_class.items()}
    return block


def _install_ids(corpus: Corpus, tokens) -> tuple:
    ids = tuple(corpus.vocab.encode(corpus.vocab.decode(tokens)))
    return ids if ids else (UNK_ID,)


# -- folds and experiments ------------------------------------------------------------

@dataclass
class FoldResult:
    fold_id: int
    conditions: dict
    training: dict
    generations: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"fold_id": self.fold_id, "conditions": self.conditions, "training": self.training,
                "generations": self.generations}


def _stage(fold_id: int, name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except FoldError:
        raise
    except Exception as exc:
        raise FoldError(fold_id, name, exc) from exc


def run_fold(config: ExperimentConfig, corpus: Corpus, fold: FoldSpec,
             lexicons: Lexicons | None = None) -> FoldResult:
    fid = fold.fold_id
    lexicons = build_lexicons(config, corpus) if lexicons is None else lexicons
    ipt_hyper = replace(config.interpreter, seed=derive_seed(config.seed, fid, 1))
    run = _stage(fid, "train-interpreter", train_interpreter, corpus, fold, ipt_hyper)
    ipt = run.interpreter
    training = {"interpreter": {"best_epoch": run.best_epoch, "log": run.log,
                                "initial_val_mean_rank": run.initial_val_mean_rank}}

    described: dict[str, dict[int, tuple]] = {}
    gt_rng = np.random.default_rng(derive_seed(config.seed, fid, 2))
    described[GROUND_TRUTH] = _stage(fid, "sample-ground-truth", sample_class_descriptions,
                                     corpus, fold.unseen, fold.train, gt_rng)
    generations = []
    for mi, mode in enumerate(config.modes):
        gen_hyper = replace(config.describer, seed=derive_seed(config.seed, fid, 3, mi))
        grun = _stage(fid, f"train-describer[{mode}]", train_describer, corpus, fold, mode, gen_hyper)
        training[f"describer/{mode}"] = {"best_epoch": grun.best_epoch, "log": grun.log}
        for di, dcfg in enumerate(config.decodes):
            name = f"{mode}/{dcfg.method}"
            rng = np.random.default_rng(derive_seed(config.seed, fid, 4, mi, di))
            texts = {}
            for c in sorted(fold.unseen):
                hyp = _stage(fid, f"generate[{name}]", grun.describer.generate, c, dcfg, rng)
                texts[c] = _install_ids(corpus, hyp.tokens)
                generations.append({"class_id": class_id(corpus, c), "mode": mode, "decode": dcfg.method,
                                    "tokens": corpus.vocab.decode(hyp.tokens), "logprob": float(hyp.logprob)})
            described[name] = texts

    stats = _stage(fid, "disc-stats", disc_stats, corpus, fold, lexicons)
    conditions = {}
    for name in condition_names(config):
        texts = described[name]
        table = _stage(fid, f"install[{name}]", ipt.install_unseen, texts, fold.unseen)
        block = _stage(fid, f"evaluate[{name}]", zero_shot_block, ipt, corpus, fold, table)
        block["generation"] = _stage(fid, f"generation-metrics[{name}]", generation_metrics, corpus, fold,
                                     texts, stats, lexicons, config.reference_pooling)
        block["descriptions"] = {class_id(corpus, c): " ".join(corpus.vocab.decode(t))
                                 for c, t in sorted(texts.items())}
        conditions[name] = block
    return FoldResult(fid, conditions, training, generations)


def _mean_std(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def aggregate(folds: list[FoldResult], names: list[str]) -> dict:
    """Mean and population std over folds of the per-fold (class-macro) values."""
    out = {}
    for name in names:
        cond = {}
        for part in ("seen", "unseen"):
            cond[part] = {m: _mean_std([f.conditions[name][part][m] for f in folds]) for m in ZERO_SHOT_METRICS}
        cond["generation"] = {m: _mean_std([f.conditions[name]["generation"][m] for f in folds])
                              for m in GENERATION_METRICS}
        out[name] = cond
    return out


@dataclass
class RunReport:
    provenance: dict
    config: dict
    conditions: list
    folds: list
    aggregate: dict

    def to_json(self) -> dict:
        return {"provenance": self.provenance, "config": self.config, "conditions": self.conditions,
                "folds": [f.to_json() for f in self.folds], "aggregate": self.aggregate}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def run_experiment(config: ExperimentConfig, corpus: Corpus | None = None) -> RunReport:
    corpus = build_corpus(config) if corpus is None else corpus
    folds = build_folds(config, corpus)
    lexicons = build_lexicons(config, corpus)
    results = []
    for fold in folds:
        log.info("fold %d: %d seen, %d unseen classes", fold.fold_id, len(fold.seen), len(fold.unseen))
        results.append(run_fold(config, corpus, fold, lexicons))
    names = condition_names(config)
    provenance = {"config_hash": config.config_hash(), "seed": config.seed, "version": f"catdesc {__version__}"}
    return RunReport(provenance, config.to_json(), names, results, aggregate(results, names))

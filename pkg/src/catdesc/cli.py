"""Command-line entry point: ``catdesc <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data.corpus import save_corpus
from .data.folds import save_folds
from .data.synthetic import SyntheticWorldConfig, generate_synthetic_world
from .data.vocab import UNK_ID, tokenize
from .decoding import DecodeConfig
from .describer import MODES, Describer, train_describer
from .harness import (ConfigError, ExperimentConfig, build_corpus, build_folds, class_id, derive_seed,
                      run_experiment, zero_shot_block)
from .interpreter import Interpreter, sample_class_descriptions, train_interpreter
from .metrics.bleu import bleu
from .metrics.cider import cider
from .metrics.discriminativity import DiscriminativityStats, Lexicons, extract_np_features
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .report import FORMATS, emit_report, render

log = logging.getLogger("catdesc")

DECODES = ("greedy", "beam", "nucleus")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _dump(obj, path, fmt: str = "json") -> None:
    if fmt != "json":
        raise ConfigError(f"format {fmt!r} is only supported by the run subcommand")
    text = json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        _write_text(path, text)


def _experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _fold(cfg, corpus, fold_id: int):
    folds = {f.fold_id: f for f in build_folds(replace(cfg, run_folds=None), corpus)}
    if fold_id not in folds:
        raise ConfigError(f"no fold {fold_id}; available {sorted(folds)}")
    return folds[fold_id]


def _save_model(prefix, kind: str, meta: dict, state: dict, extra: dict) -> None:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(prefix.with_suffix(".ckpt"), state)
    _write_text(prefix.with_suffix(".json"),
                json.dumps({"kind": kind, "meta": meta, **extra}, sort_keys=True, indent=2) + "\n")


def _load_model(prefix, kind: str):
    prefix = Path(prefix)
    side = json.loads(prefix.with_suffix(".json").read_text(encoding="utf-8"))
    if side.get("kind") != kind:
        raise ConfigError(f"{prefix}: expected a {kind} checkpoint, found {side.get('kind')!r}")
    return side, load_checkpoint(prefix.with_suffix(".ckpt"))


def _decode_config(cfg: ExperimentConfig, method: str) -> DecodeConfig:
    for d in cfg.decodes:
        if d.method == method:
            return d
    return DecodeConfig(method)


# -- subcommands -----------------------------------------------------------------------

def cmd_synth(args) -> None:
    try:
        world = SyntheticWorldConfig.load(args.config)
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {args.config}") from exc
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.seed is not None:
        world = replace(world, seed=args.seed)
    paths = save_corpus(generate_synthetic_world(world), args.out, args.feature_format)
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))


def cmd_folds(args) -> None:
    cfg = _experiment(args)
    corpus = build_corpus(cfg)
    folds = build_folds(replace(cfg, run_folds=None), corpus)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_folds(args.out, folds)


def cmd_train_gen(args) -> None:
    cfg = _experiment(args)
    corpus = build_corpus(cfg)
    fold = _fold(cfg, corpus, args.fold)
    hyper = replace(cfg.describer, seed=derive_seed(cfg.seed, fold.fold_id, 3, MODES.index(args.mode)))
    run = train_describer(corpus, fold, args.mode, hyper)
    _save_model(args.out, "describer", run.describer.meta(), run.describer.state(),
                {"fold_id": fold.fold_id, "best_epoch": run.best_epoch, "log": run.log,
                 "config_hash": cfg.config_hash()})


def cmd_train_ipt(args) -> None:
    cfg = _experiment(args)
    corpus = build_corpus(cfg)
    fold = _fold(cfg, corpus, args.fold)
    hyper = replace(cfg.interpreter, seed=derive_seed(cfg.seed, fold.fold_id, 1))
    run = train_interpreter(corpus, fold, hyper)
    _save_model(args.out, "interpreter", run.interpreter.meta(), run.interpreter.params.state(),
                {"fold_id": fold.fold_id, "best_epoch": run.best_epoch, "log": run.log,
                 "config_hash": cfg.config_hash()})


def cmd_generate(args) -> None:
    cfg = _experiment(args)
    corpus = build_corpus(cfg)
    fold = _fold(cfg, corpus, args.fold)
    side, state = _load_model(args.checkpoint, "describer")
    describer = Describer.from_state(side["meta"], state)
    dcfg = _decode_config(cfg, args.decode)
    rng = np.random.default_rng(derive_seed(cfg.seed, fold.fold_id, 5))
    lines = []
    for c in sorted(fold.unseen):
        hyp = describer.generate(c, dcfg, rng)
        lines.append(json.dumps({"class_id": class_id(corpus, c), "mode": describer.mode, "decode": args.decode,
                                 "tokens": describer.vocab.decode(hyp.tokens), "logprob": float(hyp.logprob)},
                                sort_keys=True))
    _write_text(args.out, "\n".join(lines) + "\n")


def read_generations(path) -> list[dict]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{n}: invalid JSON ({exc})") from exc
        missing = {"class_id", "tokens"} - set(rec)
        if missing:
            raise ConfigError(f"{path}:{n}: missing fields {sorted(missing)}")
        out.append(rec)
    return out


def _group(records) -> dict[str, list[dict]]:
    groups = defaultdict(list)
    for rec in records:
        groups[f"{rec.get('mode', '')}/{rec.get('decode', '')}".strip("/") or "candidates"].append(rec)
    return dict(sorted(groups.items()))


def cmd_install_eval(args) -> None:
    cfg = _experiment(args)
    corpus = build_corpus(cfg)
    fold = _fold(cfg, corpus, args.fold)
    side, state = _load_model(args.checkpoint, "interpreter")
    ipt = Interpreter.from_state(side["meta"], state)
    if args.descriptions is None:
        rng = np.random.default_rng(derive_seed(cfg.seed, fold.fold_id, 2))
        sets = {"ground_truth": sample_class_descriptions(corpus, fold.unseen, fold.train, rng)}
    else:
        label_of = {class_id(corpus, c): c for c in range(corpus.n_classes)}
        sets = {}
        for name, recs in _group(read_generations(args.descriptions)).items():
            texts = {}
            for rec in recs:
                cid = str(rec["class_id"])
                if cid not in label_of:
                    raise ConfigError(f"unknown class id {cid!r} in {args.descriptions}")
                words = rec["tokens"] if isinstance(rec["tokens"], list) else tokenize(rec["tokens"])
                texts[label_of[cid]] = tuple(corpus.vocab.encode(words)) or (UNK_ID,)
            sets[name] = texts
    out = {}
    for name, texts in sets.items():
        table = ipt.install_unseen(texts, fold.unseen)
        block = zero_shot_block(ipt, corpus, fold, table)
        out[name] = {"seen": block["seen"], "unseen": block["unseen"]}
    _dump({"fold_id": fold.fold_id, "conditions": out}, args.out, args.format)


def read_references(path) -> dict[str, list[list[str]]]:
    refs = defaultdict(list)
    with open(path, encoding="utf-8", newline="") as fh:
        for n, rec in enumerate(csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE), 1):
            if not rec:
                continue
            if len(rec) < 3:
                raise ConfigError(f"{path}:{n}: expected image_id, class_id, text")
            refs[rec[1]].append(tokenize("\t".join(rec[2:])))
    if not refs:
        raise ConfigError(f"{path}: no references")
    return dict(refs)


def cmd_metrics(args) -> None:
    refs = read_references(args.references)
    lex = (Lexicons.from_files(args.nouns, args.adjectives) if args.nouns and args.adjectives
           else Lexicons.bird())
    stats = DiscriminativityStats((cid, feats) for cid, texts in refs.items() for feats in
                                  (extract_np_features(t, lex) for t in texts))
    out = {}
    for name, recs in _group(read_generations(args.candidates)).items():
        cands, ref_sets = [], []
        for rec in recs:
            cid = str(rec["class_id"])
            if cid not in refs:
                raise ConfigError(f"no references for class {cid!r}")
            cands.append(rec["tokens"] if isinstance(rec["tokens"], list) else tokenize(rec["tokens"]))
            ref_sets.append(refs[cid])
        discs = [stats.disc_description(c, lex) for c in cands]
        out[name] = {"bleu1": bleu(cands, ref_sets, 1), "bleu4": bleu(cands, ref_sets, 4),
                     "cider": cider(cands, ref_sets),
                     "disc_max": float(np.mean([d[0] for d in discs])),
                     "disc_mean": float(np.mean([d[1] for d in discs]))}
    _dump(out, args.out, args.format)


def cmd_run(args) -> None:
    cfg = _experiment(args)
    report = run_experiment(cfg)
    if args.out is None:
        sys.stdout.write(render(report, args.format))
    else:
        emit_report(report, args.out, args.format)


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="catdesc", description="Describe categories, then classify unseen ones from descriptions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_, config=True, out_required=True):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", required=out_required, help="output path")
        sp.set_defaults(func=fn)
        return sp

    sp = add("synth", cmd_synth, "generate a synthetic corpus from a world config")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--feature-format", choices=("bin", "csv"), default="bin")

    sp = add("folds", cmd_folds, "write the fold specification")
    sp.add_argument("--seed", type=int)

    sp = add("train-gen", cmd_train_gen, "train a describer on one fold")
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--mode", choices=MODES, required=True)
    sp.add_argument("--seed", type=int)

    sp = add("train-ipt", cmd_train_ipt, "train an interpreter on one fold")
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--seed", type=int)

    sp = add("generate", cmd_generate, "describe a fold's unseen classes (JSONL)")
    sp.add_argument("--checkpoint", required=True, help="describer checkpoint prefix")
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--decode", choices=DECODES, default="beam")
    sp.add_argument("--seed", type=int)

    sp = add("install-eval", cmd_install_eval, "install descriptions and score zero-shot classification",
             out_required=False)
    sp.add_argument("--checkpoint", required=True, help="interpreter checkpoint prefix")
    sp.add_argument("--fold", type=int, required=True)
    sp.add_argument("--descriptions", help="generation JSONL; default samples ground truth")
    sp.add_argument("--format", choices=("json",), default="json")
    sp.add_argument("--seed", type=int)

    sp = add("metrics", cmd_metrics, "score candidate descriptions against references", config=False,
             out_required=False)
    sp.add_argument("--candidates", required=True, help="generation JSONL")
    sp.add_argument("--references", required=True, help="TSV: image_id, class_id, text")
    sp.add_argument("--nouns", help="noun lexicon file")
    sp.add_argument("--adjectives", help="adjective lexicon file")
    sp.add_argument("--format", choices=("json",), default="json")

    sp = add("run", cmd_run, "run a full experiment and emit the report", out_required=False)
    sp.add_argument("--format", choices=FORMATS, default="json")
    sp.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:        # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

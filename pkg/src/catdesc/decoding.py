"""Search and sampling over next-token log-probabilities.

A *step function* maps a list of prefixes (tuples of token ids, without the
start token) to an array of shape ``(len(prefixes), vocab)`` holding the
log-probabilities of the next token.  Every decoder here works on any such
function, so the same code drives the trained describer and toy tables.

Ties are broken towards the lowest token id, and between whole sequences
towards the lexicographically smallest token tuple.
"""
from __future__ import annotations

import heapq
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .data.vocab import EOS_ID

StepFn = Callable[[Sequence[tuple]], np.ndarray]
METHODS = ("greedy", "beam", "nucleus", "exhaustive")
EXHAUSTIVE_BUDGET = 10 ** 6


@dataclass(frozen=True)
class DecodeConfig:
    method: str = "beam"
    beam_width: int = 2
    top_p: float = 0.9
    max_len: int = 32
    seed: int = 0
    eos_id: int = EOS_ID

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown decoding method {self.method!r}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "DecodeConfig":
        return cls(**d)


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    logprob: float
    finished: bool = False


def _done(tokens: tuple, cfg: DecodeConfig) -> bool:
    return bool(tokens) and (tokens[-1] == cfg.eos_id or len(tokens) >= cfg.max_len)


def greedy_decode(step_fn: StepFn, config: DecodeConfig) -> Hypothesis:
    tokens, score = (), 0.0
    while not _done(tokens, config):
        lp = np.asarray(step_fn([tokens])[0], dtype=np.float64)
        tok = int(np.argmax(lp))
        tokens += (tok,)
        score += float(lp[tok])
    return Hypothesis(tokens, score, True)


def beam_search(step_fn: StepFn, config: DecodeConfig) -> tuple[Hypothesis, list[Hypothesis]]:
    """Beam search on raw cumulative log-probability.

    At each step the ``k`` best one-token extensions of the live beam are kept;
    those that end in EOS or hit ``max_len`` move to the finished pool.  The
    search stops when no live hypothesis remains.  Returns the best finished
    hypothesis and the whole pool sorted best first.
    """
    k = config.beam_width
    beam = [Hypothesis((), 0.0)]
    pool: list[Hypothesis] = []
    while beam:
        lps = np.asarray(step_fn([h.tokens for h in beam]), dtype=np.float64)
        candidates = (
            (-(h.logprob + float(lps[i, t])), h.tokens + (t,))
            for i, h in enumerate(beam) for t in range(lps.shape[1])
        )
        beam = []
        for neg, toks in heapq.nsmallest(k, candidates):
            hyp = Hypothesis(toks, -neg, _done(toks, config))
            (pool if hyp.finished else beam).append(hyp)
    pool.sort(key=lambda h: (-h.logprob, h.tokens))
    return pool[0], pool


def nucleus_mask(probs: np.ndarray, top_p: float) -> np.ndarray:
    """Token ids of the nucleus, most probable first.

    The nucleus is the shortest prefix of tokens sorted by descending
    probability whose mass reaches ``top_p``.
    """
    order = np.argsort(-probs, kind="stable")
    if top_p >= 1.0:
        return order
    mass = np.cumsum(probs[order])
    n = int(np.searchsorted(mass, top_p, side="left")) + 1
    return order[:min(n, len(order))]


def nucleus_sample(step_fn: StepFn, config: DecodeConfig, rng: np.random.Generator | None = None) -> Hypothesis:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    tokens, score = (), 0.0
    while not _done(tokens, config):
        lp = np.asarray(step_fn([tokens])[0], dtype=np.float64)
        probs = np.exp(lp)
        keep = nucleus_mask(probs, config.top_p)
        q = np.cumsum(probs[keep])
        q /= q[-1]
        pick = min(int(np.searchsorted(q, rng.random(), side="right")), len(keep) - 1)
        tok = int(keep[pick])
        tokens += (tok,)
        score += float(lp[tok])
    return Hypothesis(tokens, score, True)


def exhaustive_search(step_fn: StepFn, max_len: int, eos_id: int = EOS_ID) -> Hypothesis:
    """Score every complete sequence and return the best (test oracle)."""
    first = np.asarray(step_fn([()]), dtype=np.float64)
    vocab = first.shape[1]
    if vocab ** max_len > EXHAUSTIVE_BUDGET:
        raise ValueError(f"exhaustive search over {vocab}^{max_len} sequences exceeds budget")
    cfg = DecodeConfig(method="exhaustive", max_len=max_len, eos_id=eos_id)
    best = None
    frontier = [((), 0.0)]
    lps = first
    while frontier:
        nxt = []
        for (toks, score), row in zip(frontier, lps):
            for t in range(vocab):
                cand = (toks + (t,), score + float(row[t]))
                if _done(cand[0], cfg):
                    if best is None or (-cand[1], cand[0]) < (-best[1], best[0]):
                        best = cand
                else:
                    nxt.append(cand)
        frontier = nxt
        if frontier:
            lps = np.asarray(step_fn([f[0] for f in frontier]), dtype=np.float64)
    return Hypothesis(best[0], best[1], True)


def decode(step_fn: StepFn, config: DecodeConfig, rng: np.random.Generator | None = None) -> Hypothesis:
    if config.method == "greedy":
        return greedy_decode(step_fn, config)
    if config.method == "beam":
        return beam_search(step_fn, config)[0]
    if config.method == "nucleus":
        return nucleus_sample(step_fn, config, rng)
    return exhaustive_search(step_fn, config.max_len, config.eos_id)


def rescore(step_fn: StepFn, tokens: Sequence[int]) -> float:
    """Cumulative log-probability of ``tokens`` under ``step_fn``."""
    prefixes = [tuple(tokens[:i]) for i in range(len(tokens))]
    lps = np.asarray(step_fn(prefixes), dtype=np.float64)
    return float(sum(lps[i, t] for i, t in enumerate(tokens)))


def table_step_fn(table: np.ndarray) -> StepFn:
    """Step function from a Markov table ``(positions, contexts, vocab)`` of probabilities.

    The next-token distribution depends on the position and the previous
    token (context 0 at the start, ``1 + prev`` afterwards).
    """
    table = np.asarray(table, dtype=np.float64)
    logs = np.log(table)

    def step(prefixes):
        rows = []
        for pre in prefixes:
            ctx = 0 if not pre else 1 + pre[-1]
            rows.append(logs[len(pre), ctx])
        return np.stack(rows)

    return step

"""Corpus-level BLEU (Papineni et al., 2002)."""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence


def ngrams(tokens: Sequence, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped_counts(candidate: Sequence, references: Sequence[Sequence], n: int) -> tuple[int, int]:
    """(clipped matches, total candidate n-grams) for one sentence."""
    cand = ngrams(candidate, n)
    max_ref: Counter = Counter()
    for ref in references:
        for g, c in ngrams(ref, n).items():
            max_ref[g] = max(max_ref[g], c)
    return sum(min(c, max_ref[g]) for g, c in cand.items()), sum(cand.values())


def _closest_ref_len(cand_len: int, references) -> int:
    return min((abs(len(r) - cand_len), len(r)) for r in references)[1]


def bleu(candidates: Sequence[Sequence], reference_sets: Sequence[Sequence[Sequence]], max_n: int = 4) -> float:
    """Corpus BLEU with uniform weights over 1..max_n and the brevity penalty."""
    if not 1 <= max_n <= 4:
        raise ValueError("max_n must be in 1..4")
    if len(candidates) != len(reference_sets):
        raise ValueError("candidates and reference sets must align")
    if not candidates:
        raise ValueError("empty corpus")
    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, reference_sets):
        if not refs:
            raise ValueError("every candidate needs at least one reference")
        cand_len += len(cand)
        ref_len += _closest_ref_len(len(cand), refs)
        for n in range(1, max_n + 1):
            m, t = clipped_counts(cand, refs, n)
            matches[n - 1] += m
            totals[n - 1] += t
    if cand_len == 0 or min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_n
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_p)

"""CIDEr (Vedantam et al., 2015), the plain variant without length penalty.

Each sentence becomes, for every n in 1..4, a tf-idf vector over its n-grams;
idf is ``log(|I| / df)`` where ``df`` counts the items whose reference set
contains the n-gram.  An item scores the mean over n of the average cosine
between candidate and references, and the corpus score is the mean item
score, scaled by 10.
"""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Sequence

from .bleu import ngrams

SCALE = 10.0


def _tfidf(counts: Counter, df: Counter, log_items: float) -> tuple[dict, float]:
    vec = {g: c * (log_items - math.log(max(1.0, df[g]))) for g, c in counts.items()}
    return vec, math.sqrt(sum(v * v for v in vec.values()))


def _cosine(a: dict, na: float, b: dict, nb: float) -> float:
    if na == 0.0 or nb == 0.0:
        return 0.0
    if len(a) > len(b):
        a, b = b, a
    return sum(v * b.get(g, 0.0) for g, v in a.items()) / (na * nb)


def cider_scores(candidates: Sequence[Sequence], reference_sets: Sequence[Sequence[Sequence]],
                 max_n: int = 4) -> list[float]:
    """Per-item CIDEr scores."""
    if len(candidates) != len(reference_sets):
        raise ValueError("candidates and reference sets must align")
    if len(reference_sets) < 2:
        raise ValueError("degenerate idf: CIDEr needs at least two reference sets")
    log_items = math.log(len(reference_sets))
    scores = [0.0] * len(candidates)
    for n in range(1, max_n + 1):
        ref_counts = [[ngrams(r, n) for r in refs] for refs in reference_sets]
        df: Counter = Counter()
        for per_item in ref_counts:
            df.update(set().union(*per_item) if per_item else set())
        for i, cand in enumerate(candidates):
            cv, cn = _tfidf(ngrams(cand, n), df, log_items)
            refs = ref_counts[i]
            if not refs:
                raise ValueError(f"item {i} has no references")
            sims = [_cosine(cv, cn, *_tfidf(rc, df, log_items)) for rc in refs]
            scores[i] += sum(sims) / len(sims) / max_n
    return [SCALE * s for s in scores]


def cider(candidates: Sequence[Sequence], reference_sets: Sequence[Sequence[Sequence]]) -> float:
    scores = cider_scores(candidates, reference_sets)
    return sum(scores) / len(scores)

"""Discriminativity of noun-phrase features.

A feature is a noun together with the set of adjectives directly preceding
it.  Its discriminativity is ``exp(H(Y) - H(Y | x))``: the class entropy
over all corpus descriptions minus the class entropy among the descriptions
that contain the feature, exponentiated.  It equals the number of classes for
a feature confined to one class under a uniform class prior, and 1 for a
feature spread exactly like the prior.
"""
from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path


@dataclass(frozen=True)
class NPFeature:
    noun: str
    adjectives: frozenset = frozenset()

    def __post_init__(self):
        if not self.noun:
            raise ValueError("noun must be nonempty")
        object.__setattr__(self, "adjectives", frozenset(self.adjectives))

    def __repr__(self) -> str:
        return f"({self.noun!r}, {set(sorted(self.adjectives)) or '{}'})"


@dataclass(frozen=True)
class Lexicons:
    nouns: frozenset
    adjectives: frozenset

    @classmethod
    def from_files(cls, nouns_path, adjectives_path) -> "Lexicons":
        return cls(frozenset(_read_lexicon(Path(nouns_path).read_text())),
                   frozenset(_read_lexicon(Path(adjectives_path).read_text())))

    @classmethod
    def bird(cls) -> "Lexicons":
        base = resources.files("catdesc.metrics") / "lexicons"
        return cls(frozenset(_read_lexicon((base / "bird_nouns.txt").read_text())),
                   frozenset(_read_lexicon((base / "bird_adjectives.txt").read_text())))

    def extended(self, nouns: Iterable[str] = (), adjectives: Iterable[str] = ()) -> "Lexicons":
        return Lexicons(self.nouns | set(nouns), self.adjectives | set(adjectives))


def _read_lexicon(text: str) -> list[str]:
    return [w.strip().lower() for w in text.splitlines() if w.strip()]


def extract_np_features(tokens: Sequence[str], lexicons: Lexicons) -> set[NPFeature]:
    """Chunk ``tokens`` into (noun, adjective set) features.

    A noun collects the run of lexicon adjectives immediately before it; any
    other token breaks the run.
    """
    feats, run = set(), []
    for tok in tokens:
        if tok in lexicons.nouns:
            feats.add(NPFeature(tok, frozenset(run)))
            run = []
        elif tok in lexicons.adjectives:
            run.append(tok)
        else:
            run = []
    return feats


def perplexity(counts: Iterable[int]) -> float:
    """``exp`` of the entropy of a count vector (natural log).

    Uniform distributions return their support size exactly.
    """
    counts = [c for c in counts if c > 0]
    if not counts:
        raise ValueError("empty distribution")
    if all(c == counts[0] for c in counts):
        return float(len(counts))
    total = sum(counts)
    return math.exp(-math.fsum((c / total) * math.log(c / total) for c in counts))


class DiscriminativityStats:
    """Class counts over a description corpus and per-feature class counts."""

    def __init__(self, described: Iterable[tuple[int, Iterable[NPFeature]]]):
        self.class_counts: Counter = Counter()
        self.feature_counts: dict[NPFeature, Counter] = {}
        for label, feats in described:
            self.class_counts[label] += 1
            for f in set(feats):
                self.feature_counts.setdefault(f, Counter())[label] += 1
        if not self.class_counts:
            raise ValueError("empty corpus")
        self._prior = perplexity(self.class_counts.values())

    @classmethod
    def from_texts(cls, labelled_tokens: Iterable[tuple[int, Sequence[str]]], lexicons: Lexicons):
        return cls((lab, extract_np_features(toks, lexicons)) for lab, toks in labelled_tokens)

    @property
    def n_classes(self) -> int:
        return len(self.class_counts)

    def __contains__(self, feature: NPFeature) -> bool:
        return feature in self.feature_counts

    def disc_feature(self, feature: NPFeature) -> float:
        if feature not in self.feature_counts:
            raise KeyError(f"unseen feature {feature!r}")
        return self._prior / perplexity(self.feature_counts[feature].values())

    def disc_description(self, tokens: Sequence[str], lexicons: Lexicons) -> tuple[float, float]:
        """(max, mean) discriminativity of the corpus-attested features of a description.

        Descriptions without any attested feature score (1.0, 1.0).
        """
        values = [self.disc_feature(f) for f in sorted(extract_np_features(tokens, lexicons),
                                                       key=lambda f: (f.noun, sorted(f.adjectives)))
                  if f in self]
        if not values:
            return 1.0, 1.0
        return max(values), math.fsum(values) / len(values)


def disc_feature(feature: NPFeature, stats: DiscriminativityStats) -> float:
    return stats.disc_feature(feature)


def disc_description(tokens: Sequence[str], stats: DiscriminativityStats, lexicons: Lexicons) -> tuple[float, float]:
    return stats.disc_description(tokens, lexicons)

"""How much does a described feature pin down its class?

Noun phrases are chunked into (noun, adjective set) features. A feature's
discriminativity is the exponentiated mutual information between it and the
class, computed as a ratio of perplexities: 1 for a feature spread like the
class prior, the number of classes for one that occurs in a single class.
"""
from catdesc.metrics import DiscriminativityStats, Lexicons, extract_np_features

lex = Lexicons(frozenset({"bill", "crown", "wing", "tail"}), frozenset({"red", "blue", "long", "short"}))
corpus = [
    (0, "this bird has a red crown and a short bill"),
    (0, "a red crown and short wings"),
    (1, "a blue wing and a long tail"),
    (1, "this bird has a short bill and a blue wing"),
    (2, "a long tail and a short bill"),
    (2, "long bill with a blue crown"),
]
stats = DiscriminativityStats.from_texts([(c, t.split()) for c, t in corpus], lex)

for text in ("a red crown", "a short bill", "a blue wing and a short bill", "a plain bird"):
    feats = ", ".join(f"{' '.join(sorted(f.adjectives))} {f.noun}".strip()
                      for f in sorted(extract_np_features(text.split(), lex), key=str))
    best, mean = stats.disc_description(text.split(), lex)
    print(f"{text:<30} features [{feats}]  max {best:.3f}  mean {mean:.3f}")

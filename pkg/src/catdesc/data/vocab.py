"""Tokenisation and vocabularies."""
from __future__ import annotations

import re
from collections.abc import Iterable, Sequence

BOS, EOS, PAD, UNK = "<bos>", "<eos>", "<pad>", "<unk>"
SPECIALS = (BOS, EOS, PAD, UNK)
BOS_ID, EOS_ID, PAD_ID, UNK_ID = 0, 1, 2, 3

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*|[^\sa-z0-9]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation.

    >>> tokenize("This bird has a Long, curved bill.")
    ['this', 'bird', 'has', 'a', 'long', ',', 'curved', 'bill', '.']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(SPECIALS)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            self.add(tok)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, text_or_tokens) -> list[int]:
        toks = tokenize(text_or_tokens) if isinstance(text_or_tokens, str) else text_or_tokens
        return [self.stoi.get(t, UNK_ID) for t in toks]

    def decode(self, ids: Sequence[int], strip_specials: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_specials and i in (BOS_ID, PAD_ID):
                continue
            if strip_specials and i == EOS_ID:
                break
            out.append(self.itos[i])
        return out

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocabulary":
        if tuple(itos[:4]) != SPECIALS:
            raise ValueError("vocabulary must start with the special tokens")
        return cls(itos[4:])


def build_vocabulary(texts: Iterable[str]) -> Vocabulary:
    """Vocabulary over the tokens of ``texts`` in first-seen order."""
    texts = list(texts)
    if not texts:
        raise ValueError("cannot build a vocabulary from no texts")
    vocab = Vocabulary()
    for text in texts:
        for tok in tokenize(text):
            vocab.add(tok)
    return vocab

"""Word-level tokenizer and vocabulary.

Text is lowercased and split into runs of word characters plus single
punctuation characters. The four special tokens occupy ids 0..3 and render
as ``⟨PAD⟩``, ``⟨UNK⟩``, ``⟨MASK⟩`` and ``⟨SUM⟩``. Because every punctuation
character becomes its own token, raw text can never produce one of those
surface forms: ``"⟨MASK⟩"`` in a log line tokenizes to ``⟨``, ``mask``, ``⟩``.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, MASK, SUM = 0, 1, 2, 3
SPECIAL_TOKENS = ("⟨PAD⟩", "⟨UNK⟩", "⟨MASK⟩", "⟨SUM⟩")
NUM_SPECIAL = len(SPECIAL_TOKENS)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class EmptyCorpus(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def normalize(text: str) -> str:
    """Canonical form of ``text``: lowercased tokens joined by single spaces."""
    return " ".join(tokenize(text))


@dataclass(frozen=True)
class Vocab:
    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if tuple(self.id_to_token[:NUM_SPECIAL]) != SPECIAL_TOKENS:
            raise ValueError("vocabulary must start with the special tokens")
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "token_to_id", mapping)

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> list[int]:
        return encode(self, text)

    def decode(self, ids: Iterable[int]) -> str:
        return decode(self, ids)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(tuple(lines))


def build_vocab(corpus: Sequence[str], min_freq: int = 1) -> Vocab:
    """Build a vocabulary from raw text lines.

    Tokens are ordered by descending frequency, ties broken lexicographically;
    tokens seen fewer than ``min_freq`` times are left out and encode to UNK.
    """
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for line in corpus for tok in tokenize(line))
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq),
                  key=lambda tok: (-counts[tok], tok))
    return Vocab(SPECIAL_TOKENS + tuple(kept))


def encode(vocab: Vocab, text: str) -> list[int]:
    lookup = vocab.token_to_id
    return [lookup.get(tok, UNK) for tok in tokenize(text)]


def decode(vocab: Vocab, ids: Iterable[int]) -> str:
    out = []
    n = len(vocab)
    for i in ids:
        i = int(i)
        if not 0 <= i < n:
            raise ValueError(f"token id {i} outside vocabulary of size {n}")
        out.append(vocab.id_to_token[i])
    return " ".join(out)

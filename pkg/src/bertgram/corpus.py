"""Token corpora: vocabulary files, sequence loading, n-gram and length statistics.

File conventions are deliberately plain. A vocabulary file holds one token
per line and the line number is the token id. A corpus file holds one
sequence per line, tokens separated by single spaces. The PAD id is
reserved one past the vocabulary and never appears in loaded corpora.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusError


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        ids: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in ids:
                raise CorpusError(f"duplicate token {tok!r} at lines {ids[tok]} and {i}")
            if not tok or " " in tok:
                raise CorpusError(f"invalid token {tok!r} at line {i}")
            ids[tok] = i
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        # reserved id just past the loaded range; has no surface form
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self.ids[token]
        except KeyError:
            raise CorpusError(f"unknown token {token!r}") from None

    def token_of(self, token_id: int) -> str:
        if token_id == self.pad_id:
            return "<pad>"
        if not 0 <= token_id < len(self.tokens):
            raise ValueError(f"token id {token_id} outside vocabulary of size {len(self.tokens)}")
        return self.tokens[token_id]

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise CorpusError(f"empty vocabulary file {path}")
        return cls(tuple(lines))


@dataclass
class Corpus:
    vocabulary: Vocabulary
    sequences: list[list[int]]

    def __len__(self) -> int:
        return len(self.sequences)

    def unigram_counts(self) -> Counter[int]:
        counts: Counter[int] = Counter()
        for seq in self.sequences:
            counts.update(seq)
        return counts


def load_corpus(path: str | Path, vocabulary: Vocabulary) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorpusError(f"empty corpus file {path}")
    sequences: list[list[int]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            raise CorpusError(f"{path}: empty sequence at line {lineno}")
        seq = []
        for tok in line.split(" "):
            if tok not in vocabulary.ids:
                raise CorpusError(f"{path}: unknown token {tok!r} at line {lineno}")
            seq.append(vocabulary.ids[tok])
        sequences.append(seq)
    return Corpus(vocabulary, sequences)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    vocab = corpus.vocabulary
    out = "".join(" ".join(vocab.token_of(w) for w in seq) + "\n" for seq in corpus.sequences)
    Path(path).write_text(out, encoding="utf-8")


def ngrams(sequence: list[int], n: int) -> Counter[tuple[int, ...]]:
    """Counts of the contiguous n-grams of one sequence."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return Counter(tuple(sequence[i : i + n]) for i in range(len(sequence) - n + 1))


@dataclass
class LengthDistribution:
    probs: dict[int, float]
    _lengths: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("length distribution needs at least one length")
        total = sum(self.probs.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"length probabilities sum to {total}, not 1")
        for length, p in self.probs.items():
            if length < 1 or p < 0:
                raise ValueError(f"bad entry length={length} p={p}")
        lengths = np.array(sorted(self.probs), dtype=np.int64)
        pmf = np.array([self.probs[int(l)] for l in lengths])
        self._lengths = lengths
        cdf = np.cumsum(pmf)
        cdf[-1] = 1.0
        self._cdf = cdf

    def sample(self, rng: np.random.Generator) -> int:
        return int(self._lengths[np.searchsorted(self._cdf, rng.random(), side="right")])


def length_distribution(corpus: Corpus) -> LengthDistribution:
    counts = Counter(len(seq) for seq in corpus.sequences)
    n = len(corpus.sequences)
    return LengthDistribution({length: c / n for length, c in sorted(counts.items())})

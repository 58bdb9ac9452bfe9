"""Clipped n-gram counts, smoothed precision scores, and per-position shaping.

The max-count table stores, per order, the highest count any reference
assigns to each n-gram. Scoring a candidate then needs the table alone,
never the references, so cost does not grow with the reference corpus.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

from .corpus import ngrams
from .errors import FormatError

NGTB_MAGIC = b"NGTB"
NGTB_VERSION = 1

# Scores are snapped to this fixed-point grid. Differences and partial sums
# of grid values are exact in float64, so per-position increments telescope
# bitwise back to the full-sequence score under any summation order.
_GRID = 2.0**-44


def _snap(score: float) -> float:
    return round(score / _GRID) * _GRID


@dataclass
class MaxCountTable:
    n_max: int
    counts: list[dict[tuple[int, ...], int]]  # counts[n-1]: n-gram -> max reference count

    def __post_init__(self) -> None:
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if len(self.counts) != self.n_max:
            raise ValueError(f"expected {self.n_max} count maps, got {len(self.counts)}")

    def max_count(self, gram: tuple[int, ...]) -> int:
        """Highest reference count for one n-gram; 0 when absent."""
        n = len(gram)
        if not 1 <= n <= self.n_max:
            raise ValueError(f"order {n} outside table range 1..{self.n_max}")
        return self.counts[n - 1].get(gram, 0)


def build_max_count_table(references: list[list[int]], n_max: int = 4) -> MaxCountTable:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    if not references:
        raise ValueError("reference corpus is empty")
    counts: list[dict[tuple[int, ...], int]] = [{} for _ in range(n_max)]
    for ref in references:
        for n in range(1, n_max + 1):
            table = counts[n - 1]
            for gram, c in ngrams(ref, n).items():
                if c > table.get(gram, 0):
                    table[gram] = c
    return MaxCountTable(n_max, counts)


def modified_precision(
    candidate: list[int], table: MaxCountTable, n: int
) -> tuple[int, int]:
    """Clipped match count and total n-gram count, as exact integers."""
    if not 1 <= n <= table.n_max:
        raise ValueError(f"order {n} outside table range 1..{table.n_max}")
    if not candidate:
        raise ValueError("empty candidate")
    cand = ngrams(candidate, n)
    matched = sum(min(c, table.counts[n - 1].get(gram, 0)) for gram, c in cand.items())
    total = max(0, len(candidate) - n + 1)
    return matched, total


def _check_weights(weights: list[float] | tuple[float, ...], n_max: int) -> list[float]:
    if len(weights) != n_max:
        raise ValueError(f"expected {n_max} weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {total}, not 1")
    return list(weights)


def bleu(
    candidate: list[int],
    table: MaxCountTable,
    weights: list[float] | tuple[float, ...] | None = None,
) -> float:
    """Geometric combination of clipped precisions with zero-count smoothing.

    Orders longer than the candidate are dropped and the remaining weights
    renormalised. Orders with no match get the smoothed value 1/(2^i * total)
    where i counts smoothed orders so far, starting at 1. No length penalty.
    """
    if not candidate:
        raise ValueError("empty candidate")
    if weights is None:
        weights = [1.0 / table.n_max] * table.n_max
    else:
        weights = _check_weights(weights, table.n_max)

    kept: list[float] = []
    log_p: list[float] = []
    smooth = 1
    for n in range(1, table.n_max + 1):
        matched, total = modified_precision(candidate, table, n)
        if total == 0:
            continue
        if matched == 0:
            p = 1.0 / (2**smooth * total)
            smooth += 1
        else:
            p = matched / total
        kept.append(weights[n - 1])
        log_p.append(math.log(p))
    norm = math.fsum(kept)
    if norm <= 0:
        raise ValueError("all precision orders were dropped or zero-weighted")
    score = math.exp(math.fsum(w * lp for w, lp in zip(kept, log_p)) / norm)
    return _snap(score)


def shaped_increments(
    candidate: list[int],
    table: MaxCountTable,
    weights: list[float] | tuple[float, ...] | None = None,
) -> list[float]:
    """Per-position score increments: prefix score minus previous prefix score.

    The empty prefix scores 0, so the increments sum exactly to the score of
    the whole candidate.
    """
    increments: list[float] = []
    prev = 0.0
    for t in range(1, len(candidate) + 1):
        score = bleu(candidate[:t], table, weights)
        increments.append(score - prev)
        prev = score
    return increments


# ---------------------------------------------------------------------------
# NGTB container
# ---------------------------------------------------------------------------


def write_ngram_table(table: MaxCountTable, path: str | Path) -> None:
    parts = [NGTB_MAGIC, struct.pack("<II", NGTB_VERSION, table.n_max)]
    for n in range(1, table.n_max + 1):
        entries = sorted(table.counts[n - 1].items())
        parts.append(struct.pack("<Q", len(entries)))
        for gram, count in entries:
            parts.append(struct.pack(f"<{n}II", *gram, count))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    """Byte cursor that reports the offset of any truncation."""

    def __init__(self, data: bytes, path: str | Path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"{self.path}: truncated at byte {len(self.data)}, needed {self.offset + size}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise FormatError(f"{self.path}: {len(self.data) - self.offset} trailing bytes after byte {self.offset}")


def read_ngram_table(path: str | Path) -> MaxCountTable:
    reader = _Reader(Path(path).read_bytes(), path)
    magic = reader.take(4)
    if magic != NGTB_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    version, n_max = reader.unpack("<II")
    if version != NGTB_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if n_max < 1:
        raise FormatError(f"{path}: bad n_max {n_max}")
    counts: list[dict[tuple[int, ...], int]] = []
    for n in range(1, n_max + 1):
        (num_entries,) = reader.unpack("<Q")
        table: dict[tuple[int, ...], int] = {}
        for _ in range(num_entries):
            row = reader.unpack(f"<{n}II")
            table[row[:-1]] = row[-1]
        counts.append(table)
    reader.finish()
    return MaxCountTable(n_max, counts)

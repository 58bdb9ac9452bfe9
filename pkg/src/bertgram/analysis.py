"""Diagnostics: neighbor queries, perturbation studies, alignment tests, diversity.

Everything here reads compiled artifacts or scored rewards; nothing trains.
The perturbation half follows a two-phase shape: first plan one edit per
sequence, then compare the embeddings of original and edited sequences as
a position-by-position sensitivity matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import betainc

from .corpus import Corpus
from .embeddings import EmbeddedCorpus, EmbeddedSequence


@dataclass
class NeighborHit:
    token_id: int
    seq_id: int
    position: int
    sq_dist: float


def nearest_neighbors(
    corpus: EmbeddedCorpus,
    query: np.ndarray,
    k: int = 10,
    token_filter: int | None = None,
    exclude: bool = False,
) -> list[NeighborHit]:
    """Closest corpus positions to a query vector, ascending squared distance.

    token_filter restricts hits to one token type; with exclude=True it
    drops that type instead, which is how you ask "what else lives here".
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64)
    vectors = []
    meta = []
    for seq in corpus.sequences:
        for t, w in enumerate(seq.ids):
            if token_filter is not None:
                if exclude and w == token_filter:
                    continue
                if not exclude and w != token_filter:
                    continue
            vectors.append(seq.vectors[t])
            meta.append((w, seq.seq_id, t))
    if not vectors:
        return []
    diff = np.asarray(vectors, dtype=np.float64) - query
    d2 = (diff * diff).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:k]
    return [NeighborHit(*meta[i], float(d2[i])) for i in order]


@dataclass
class Perturbation:
    seq_id: int
    position: int
    replacement: int


def perturb_plan(corpus: Corpus, seed: int) -> list[Perturbation]:
    """One planned edit per sequence: uniform position, unigram replacement.

    The replacement token is drawn from the corpus unigram distribution and
    may coincide with the original token.
    """
    rng = np.random.default_rng(seed)
    counts = corpus.unigram_counts()
    tokens = np.array(sorted(counts), dtype=np.int64)
    probs = np.array([counts[int(w)] for w in tokens], dtype=np.float64)
    probs /= probs.sum()
    n = len(corpus.sequences)
    positions = [int(rng.integers(len(seq))) for seq in corpus.sequences]
    replacements = rng.choice(tokens, size=n, p=probs)
    return [
        Perturbation(i, positions[i], int(replacements[i])) for i in range(n)
    ]


def apply_perturbations(corpus: Corpus, plan: list[Perturbation]) -> Corpus:
    if len(plan) != len(corpus.sequences):
        raise ValueError(f"{len(plan)} edits for {len(corpus.sequences)} sequences")
    edited = []
    for pert, seq in zip(plan, corpus.sequences):
        if not 0 <= pert.position < len(seq):
            raise ValueError(
                f"edit position {pert.position} outside sequence {pert.seq_id}"
            )
        copy = list(seq)
        copy[pert.position] = pert.replacement
        edited.append(copy)
    return Corpus(corpus.vocabulary, edited)


@dataclass
class SensitivityMatrix:
    values: np.ndarray  # (T, T) mean reward at position t for pairs edited at j
    counts: np.ndarray  # (T, T) samples behind each cell


def sensitivity_matrix(
    pairs: Iterable[tuple[EmbeddedSequence, EmbeddedSequence, int]],
    gamma: float,
) -> SensitivityMatrix:
    """Row j holds mean per-position rewards over pairs perturbed at j.

    Pairs stream through one at a time, so the input can be a generator
    over a large experiment without materialising it.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    sums: np.ndarray | None = None
    counts: np.ndarray | None = None
    for original, edited, j in pairs:
        if len(original) != len(edited):
            raise ValueError(
                f"pair lengths differ: {len(original)} vs {len(edited)}"
            )
        T = len(original)
        if sums is None:
            sums = np.zeros((T, T))
            counts = np.zeros((T, T), dtype=np.int64)
        elif T != sums.shape[0]:
            raise ValueError(f"pair length {T} does not match matrix size {sums.shape[0]}")
        if not 0 <= j < T:
            raise ValueError(f"perturbed position {j} outside length {T}")
        diff = original.vectors.astype(np.float64) - edited.vectors.astype(np.float64)
        sums[j] += np.exp(-gamma * (diff * diff).sum(axis=1))
        counts[j] += 1
    if sums is None:
        raise ValueError("no pairs supplied")
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return SensitivityMatrix(values, counts)


# ---------------------------------------------------------------------------
# aligned comparison
# ---------------------------------------------------------------------------


@dataclass
class TTestResult:
    t: float
    df: int
    p: float


def pooled_t_test(a: np.ndarray, b: np.ndarray) -> TTestResult:
    """Two-sample t statistic with pooled variance and two-sided p-value."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n1, n2 = len(a), len(b)
    if n1 < 2 or n2 < 2:
        raise ValueError(f"need >= 2 samples per group, got {n1} and {n2}")
    df = n1 + n2 - 2
    delta = a.mean() - b.mean()
    pooled = ((n1 - 1) * a.var(ddof=1) + (n2 - 1) * b.var(ddof=1)) / df
    if pooled == 0.0:
        if delta == 0.0:
            return TTestResult(0.0, df, 1.0)
        return TTestResult(math.copysign(math.inf, delta), df, 0.0)
    t = delta / math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(float(t), df, p)


@dataclass
class AlignedItem:
    rewards: list[float]
    anchor_start: int
    anchor_len: int = 1

    def __post_init__(self) -> None:
        if self.anchor_len < 1:
            raise ValueError(f"anchor length must be >= 1, got {self.anchor_len}")
        if not 0 <= self.anchor_start <= len(self.rewards) - self.anchor_len:
            raise ValueError(
                f"anchor [{self.anchor_start}, +{self.anchor_len}) outside "
                f"{len(self.rewards)} rewards"
            )


@dataclass
class OffsetRow:
    offset: int
    n_real: int
    n_fake: int
    mean_real: float | None
    mean_fake: float | None
    test: TTestResult | None


def _collect_offsets(items: list[AlignedItem]) -> dict[int, list[float]]:
    table: dict[int, list[float]] = {}
    for item in items:
        start, span = item.anchor_start, item.anchor_len
        for t, r in enumerate(item.rewards):
            if t < start:
                table.setdefault(t - start, []).append(r)
            elif t >= start + span:
                table.setdefault(t - start - span + 1, []).append(r)
        anchor = item.rewards[start : start + span]
        table.setdefault(0, []).append(sum(anchor) / span)
    return table


def aligned_comparison(
    real: list[AlignedItem], fake: list[AlignedItem]
) -> list[OffsetRow]:
    """Per-offset reward means around the anchors, with a pooled t-test.

    Position offsets count from each item's anchor; a multi-token anchor
    contributes its mean reward once, at offset zero. Offsets where either
    group has fewer than two samples carry no test.
    """
    real_table = _collect_offsets(real)
    fake_table = _collect_offsets(fake)
    rows = []
    for offset in sorted(set(real_table) | set(fake_table)):
        ra = real_table.get(offset, [])
        fa = fake_table.get(offset, [])
        test = pooled_t_test(ra, fa) if len(ra) >= 2 and len(fa) >= 2 else None
        rows.append(
            OffsetRow(
                offset,
                len(ra),
                len(fa),
                sum(ra) / len(ra) if ra else None,
                sum(fa) / len(fa) if fa else None,
                test,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------


@dataclass
class DiversityMetrics:
    rho: float
    rho_n: dict[int, float]
    mean_length: float


def diversity_metrics(
    batch: list[list[int]],
    pad_id: int | None = None,
    orders: tuple[int, ...] = (2, 4),
    per_sequence: bool = False,
) -> DiversityMetrics:
    """Distinct-sequence and distinct-n-gram ratios for a generation batch.

    rho_n is batch-wide by default: distinct n-grams across the whole batch
    over total n-gram slots. per_sequence=True averages the within-sequence
    ratio instead, which ignores repetition across sequences.
    """
    if not batch:
        raise ValueError("empty batch")
    rho = len({tuple(seq) for seq in batch}) / len(batch)
    rho_n: dict[int, float] = {}
    for n in orders:
        if per_sequence:
            ratios = []
            for seq in batch:
                grams = [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]
                if grams:
                    ratios.append(len(set(grams)) / len(grams))
            rho_n[n] = sum(ratios) / len(ratios) if ratios else 1.0
        else:
            distinct: set[tuple[int, ...]] = set()
            total = 0
            for seq in batch:
                for i in range(len(seq) - n + 1):
                    distinct.add(tuple(seq[i : i + n]))
                total += max(0, len(seq) - n + 1)
            rho_n[n] = len(distinct) / total if total else 1.0
    if pad_id is None:
        lengths = [len(seq) for seq in batch]
    else:
        lengths = [sum(1 for w in seq if w != pad_id) for seq in batch]
    return DiversityMetrics(rho, rho_n, sum(lengths) / len(batch))

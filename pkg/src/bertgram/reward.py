"""Reward evaluation for candidate sequences against compiled indices.

Three embedding routes with one shape of result: pairwise against a single
reference, exact max over an equal-length reference set, and the pruned
route that only consults the per-type codebooks. The mixture then blends
per-position embedding rewards with per-position n-gram increments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import EmbeddedCorpus, EmbeddedSequence
from .index import BertGramIndex


@dataclass
class RewardBreakdown:
    per_position: np.ndarray  # (T,) float64
    total: float

    @classmethod
    def from_positions(cls, values: np.ndarray) -> "RewardBreakdown":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, float(values.mean()))


def rbf(u: np.ndarray, v: np.ndarray, gamma: float) -> float:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    diff = np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    return math.exp(-gamma * float(diff @ diff))


def _position_rbf(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    diff = a.astype(np.float64) - b.astype(np.float64)
    return np.exp(-gamma * (diff * diff).sum(axis=1))


def pairwise_reward(
    candidate: EmbeddedSequence, reference: EmbeddedSequence, gamma: float
) -> RewardBreakdown:
    """Position-by-position kernel values against one reference of equal length."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if len(candidate) != len(reference):
        raise ValueError(
            f"length mismatch: candidate {len(candidate)}, reference {len(reference)}"
        )
    return RewardBreakdown.from_positions(
        _position_rbf(candidate.vectors, reference.vectors, gamma)
    )


def exact_set_reward(
    candidate: EmbeddedSequence,
    references: EmbeddedCorpus | list[EmbeddedSequence],
    gamma: float,
) -> tuple[int, RewardBreakdown]:
    """Best pairwise reward over every equal-length reference, by full scan.

    Returns the winning reference's seq_id with its breakdown. Cost grows
    with the reference set; the codebook route exists to avoid exactly that.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    seqs = references.sequences if isinstance(references, EmbeddedCorpus) else references
    eligible = [ref for ref in seqs if len(ref) == len(candidate)]
    if not eligible:
        raise ValueError(f"no reference of length {len(candidate)}")
    stack = np.stack([ref.vectors for ref in eligible]).astype(np.float64)
    diff = stack - candidate.vectors.astype(np.float64)[None, :, :]
    per_ref = np.exp(-gamma * (diff * diff).sum(axis=2))  # (m, T)
    best = int(per_ref.mean(axis=1).argmax())
    return eligible[best].seq_id, RewardBreakdown.from_positions(per_ref[best])


def indexed_reward(
    candidate: EmbeddedSequence, index: BertGramIndex, gamma: float
) -> RewardBreakdown:
    """Per-position max kernel value over the token's own centroids.

    Positions whose token has no codebook (unknown types, PAD) score zero.
    Each position touches at most K centroid rows, independent of how many
    sequences were compiled.
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    values = np.zeros(len(candidate), dtype=np.float64)
    vectors = candidate.vectors.astype(np.float64)
    for t, w in enumerate(candidate.ids):
        entry = index.types.get(w)
        if entry is None:
            continue
        diff = entry.centroids.astype(np.float64) - vectors[t]
        values[t] = math.exp(-gamma * float((diff * diff).sum(axis=1).min()))
    return RewardBreakdown.from_positions(values)


def mixed_reward(
    embedding: RewardBreakdown,
    ngram_increments: list[float] | np.ndarray,
    mix_weight: float,
) -> RewardBreakdown:
    """Blend embedding rewards with n-gram increments, position by position.

    No clamping: increments may be negative, so mixed values may be too.
    """
    if not 0.0 <= mix_weight <= 1.0:
        raise ValueError(f"mix weight must be in [0, 1], got {mix_weight}")
    increments = np.asarray(ngram_increments, dtype=np.float64)
    if increments.shape != embedding.per_position.shape:
        raise ValueError(
            f"length mismatch: {increments.shape[0]} increments, "
            f"{embedding.per_position.shape[0]} embedding rewards"
        )
    return RewardBreakdown.from_positions(
        mix_weight * embedding.per_position + (1.0 - mix_weight) * increments
    )


def normalize_length(sequence: list[int], target: int, pad_id: int) -> list[int]:
    """Truncate to the target length or pad with the reserved id."""
    if target < 1:
        raise ValueError(f"target length must be >= 1, got {target}")
    if len(sequence) >= target:
        return list(sequence[:target])
    return list(sequence) + [pad_id] * (target - len(sequence))

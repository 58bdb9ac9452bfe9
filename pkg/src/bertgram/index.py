"""Per-token-type centroid codebooks over contextual embeddings.

Compiling a corpus groups every occurrence vector by its token type and
clusters each group down to at most K centroids. Scoring later touches
only the codebook of the token under evaluation, so query cost is bounded
by K and the vector width regardless of corpus size.
"""

from __future__ import annotations

import hashlib
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddedCorpus
from .errors import FormatError

BGIX_MAGIC = b"BGIX"
BGIX_VERSION = 1


@dataclass
class TypePartition:
    vectors: np.ndarray  # (n, d) float32, one row per occurrence
    origins: list[tuple[int, int]]  # (seq_id, position) per row


@dataclass
class TypeCentroids:
    centroids: np.ndarray  # (k, d) float32
    exemplars: list[tuple[int, int]]  # (seq_id, position) nearest each centroid


@dataclass
class BertGramIndex:
    d: int
    k_max: int
    types: dict[int, TypeCentroids]


def partition_by_type(corpus: EmbeddedCorpus) -> dict[int, TypePartition]:
    rows: dict[int, list[int]] = {}
    flat_vectors = []
    flat_origins = []
    row = 0
    for seq in corpus.sequences:
        for t, w in enumerate(seq.ids):
            rows.setdefault(w, []).append(row)
            flat_origins.append((seq.seq_id, t))
            row += 1
        flat_vectors.append(seq.vectors)
    stacked = np.concatenate(flat_vectors, axis=0)
    return {
        w: TypePartition(stacked[idx], [flat_origins[i] for i in idx])
        for w, idx in sorted(rows.items())
    }


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = (x * x).sum(axis=1)[:, None] + (c * c).sum(axis=1)[None, :] - 2.0 * (x @ c.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _lloyd(
    x: np.ndarray, k: int, seed: int, max_iters: int, tol: float
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """K-means with distance-weighted seeding; returns per-iteration WCSS too."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)

    # seeding: first centre uniform, the rest proportional to squared distance
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        centers[j] = x[rng.choice(n, p=d2 / d2.sum())]
        np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1), out=d2)

    assign = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iters):
        dist = _sq_dists(x, centers)
        assign = dist.argmin(axis=1)
        own = dist[np.arange(n), assign]
        for j in np.flatnonzero(np.bincount(assign, minlength=k) == 0):
            # an empty cluster restarts at the point farthest from its centroid
            far = int(own.argmax())
            assign[far] = j
            own[far] = -1.0
        new_centers = np.zeros_like(centers)
        np.add.at(new_centers, assign, x)
        sizes = np.bincount(assign, minlength=k).astype(np.float64)
        new_centers /= sizes[:, None]
        history.append(float(((x - new_centers[assign]) ** 2).sum()))
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    return centers, assign, history


def kmeans(
    vectors: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 25,
    tol: float = 1e-4,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster rows of `vectors` into at most k centroids.

    Duplicate rows collapse first; when at most k distinct rows remain they
    are returned verbatim, so a loose budget reproduces the data exactly.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError(f"need a non-empty (n, d) array, got shape {x.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    distinct = np.unique(x, axis=0)
    if distinct.shape[0] <= k:
        assign = _sq_dists(x, distinct).argmin(axis=1)
        return distinct, assign
    centers, assign, _ = _lloyd(x, k, seed, max_iters, tol)
    return centers, assign


def _type_seed(seed: int, token_id: int) -> int:
    key = struct.pack("<QI", seed & ((1 << 64) - 1), token_id)
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def build_index(
    corpus: EmbeddedCorpus,
    k_max: int,
    seed: int,
    threads: int | None = None,
) -> BertGramIndex:
    """Cluster every type partition; deterministic for a given corpus and seed.

    Types are clustered independently on a worker pool. Each type draws its
    own seed from (seed, token id), so the result does not depend on worker
    count or scheduling.
    """
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    parts = partition_by_type(corpus)

    def job(item: tuple[int, TypePartition]) -> tuple[int, TypeCentroids]:
        w, part = item
        x = part.vectors.astype(np.float64)
        centers, _ = kmeans(x, k_max, seed=_type_seed(seed, w))
        nearest = _sq_dists(centers, x).argmin(axis=1)
        exemplars = [part.origins[int(i)] for i in nearest]
        return w, TypeCentroids(centers.astype(np.float32), exemplars)

    workers = threads if threads is not None else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        built = dict(pool.map(job, sorted(parts.items())))
    return BertGramIndex(corpus.d, k_max, {w: built[w] for w in sorted(built)})


def nearest_centroid(
    index: BertGramIndex, token_id: int, vector: np.ndarray
) -> tuple[int, float] | None:
    """Closest centroid for one token type, or None for an unindexed type."""
    entry = index.types.get(token_id)
    if entry is None:
        return None
    diff = entry.centroids.astype(np.float64) - np.asarray(vector, dtype=np.float64)
    d2 = (diff * diff).sum(axis=1)
    j = int(d2.argmin())
    return j, float(d2[j])


# ---------------------------------------------------------------------------
# BGIX container
# ---------------------------------------------------------------------------


def write_index(index: BertGramIndex, path: str | Path) -> None:
    parts = [
        BGIX_MAGIC,
        struct.pack("<IIII", BGIX_VERSION, index.d, index.k_max, len(index.types)),
    ]
    for w in sorted(index.types):
        entry = index.types[w]
        k = entry.centroids.shape[0]
        if not np.all(np.isfinite(entry.centroids)):
            raise ValueError(f"type {w} has non-finite centroids")
        parts.append(struct.pack("<II", w, k))
        for centroid, (seq_id, pos) in zip(entry.centroids, entry.exemplars):
            parts.append(centroid.astype("<f4").tobytes())
            parts.append(struct.pack("<QI", seq_id, pos))
    Path(path).write_bytes(b"".join(parts))


def read_index(path: str | Path) -> BertGramIndex:
    from .ngram import _Reader

    reader = _Reader(Path(path).read_bytes(), path)
    magic = reader.take(4)
    if magic != BGIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    version, d, k_max, num_types = reader.unpack("<IIII")
    if version != BGIX_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if d < 1 or k_max < 1:
        raise FormatError(f"{path}: bad header d={d} k_max={k_max}")
    types: dict[int, TypeCentroids] = {}
    for _ in range(num_types):
        w, k = reader.unpack("<II")
        if k == 0:
            raise FormatError(f"{path}: type {w} has no centroids")
        centroids = np.empty((k, d), dtype=np.float32)
        exemplars: list[tuple[int, int]] = []
        for j in range(k):
            centroids[j] = np.frombuffer(reader.take(4 * d), dtype="<f4")
            seq_id, pos = reader.unpack("<QI")
            exemplars.append((seq_id, pos))
        if not np.all(np.isfinite(centroids)):
            raise FormatError(f"{path}: non-finite centroid for type {w}")
        types[w] = TypeCentroids(centroids, exemplars)
    reader.finish()
    return BertGramIndex(d, k_max, types)

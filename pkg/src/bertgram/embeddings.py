"""Per-position embedding dumps and a deterministic synthetic embedder.

The EMBD container stores, per sequence, the token ids and one vector per
position. The synthetic embedder stands in for a contextual encoder in
tests and experiments: each position's vector is a pure function of the
token window around it and a seed, so identical windows embed identically
and an edit can only disturb positions whose window covers it.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .errors import FormatError

EMBD_MAGIC = b"EMBD"
EMBD_VERSION = 1

# window slot marker for positions outside the sequence
_BOUNDARY = 0xFFFFFFFF
_SEED_MASK = (1 << 64) - 1


@dataclass
class EmbeddedSequence:
    seq_id: int
    ids: list[int]
    vectors: np.ndarray  # (T, d) float32

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValueError(
                f"vectors shaped {self.vectors.shape} for {len(self.ids)} tokens"
            )

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class EmbeddedCorpus:
    d: int
    sequences: list[EmbeddedSequence]

    def __post_init__(self) -> None:
        for seq in self.sequences:
            if seq.vectors.shape[1] != self.d:
                raise ValueError(
                    f"sequence {seq.seq_id} has width {seq.vectors.shape[1]}, corpus width {self.d}"
                )

    def __len__(self) -> int:
        return len(self.sequences)


def write_dump(corpus: EmbeddedCorpus, path: str | Path) -> None:
    if not corpus.sequences:
        raise ValueError("refusing to write an empty embedding dump")
    parts = [EMBD_MAGIC, struct.pack("<IIQ", EMBD_VERSION, corpus.d, len(corpus.sequences))]
    for seq in corpus.sequences:
        if not len(seq):
            raise ValueError(f"sequence {seq.seq_id} is empty")
        if not np.all(np.isfinite(seq.vectors)):
            raise ValueError(f"sequence {seq.seq_id} has non-finite values")
        parts.append(struct.pack("<QI", seq.seq_id, len(seq)))
        parts.append(struct.pack(f"<{len(seq)}I", *seq.ids))
        parts.append(seq.vectors.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_dump(path: str | Path) -> EmbeddedCorpus:
    from .ngram import _Reader  # same cursor contract for every container

    reader = _Reader(Path(path).read_bytes(), path)
    magic = reader.take(4)
    if magic != EMBD_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    version, d, num_sequences = reader.unpack("<IIQ")
    if version != EMBD_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if d < 1:
        raise FormatError(f"{path}: bad vector width {d}")
    if num_sequences == 0:
        raise FormatError(f"{path}: dump holds no sequences")
    sequences = []
    for _ in range(num_sequences):
        seq_id, length = reader.unpack("<QI")
        if length == 0:
            raise FormatError(f"{path}: sequence {seq_id} has zero length")
        ids = list(reader.unpack(f"<{length}I"))
        vectors = np.frombuffer(reader.take(4 * length * d), dtype="<f4").reshape(length, d)
        if not np.all(np.isfinite(vectors)):
            raise FormatError(f"{path}: non-finite values in sequence {seq_id}")
        sequences.append(EmbeddedSequence(seq_id, ids, vectors.copy()))
    reader.finish()
    return EmbeddedCorpus(d, sequences)


# ---------------------------------------------------------------------------
# synthetic embedder
# ---------------------------------------------------------------------------


def synthetic_embed(
    sequence: list[int],
    window: int,
    d: int,
    seed: int,
    scale: float = 1.0,
) -> np.ndarray:
    """Deterministic per-position vectors from the window around each token.

    The window covers positions t-window .. t+window, with out-of-range
    slots replaced by a boundary marker. Its contents and the seed are
    hashed into d draws from a symmetric distribution, normalised to unit
    length and multiplied by scale. Positions with identical windows get
    identical vectors, under any seed.
    """
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    if window < 0:
        raise ValueError(f"window must be >= 0, got {window}")
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    T = len(sequence)
    if T == 0:
        raise ValueError("empty sequence")
    blocks = (d + 7) // 8  # one 64-byte digest yields 8 draws
    seed_bytes = struct.pack("<Q", seed & _SEED_MASK)
    raw = bytearray()
    for t in range(T):
        slots = [
            sequence[i] if 0 <= i < T else _BOUNDARY
            for i in range(t - window, t + window + 1)
        ]
        key = seed_bytes + struct.pack(f"<{len(slots)}I", *slots)
        for b in range(blocks):
            raw += hashlib.blake2b(key + struct.pack("<I", b), digest_size=64).digest()
    words = np.frombuffer(bytes(raw), dtype="<u8").reshape(T, blocks * 8)
    # uniforms strictly inside (0, 1), then Box-Muller for symmetric draws
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    half = blocks * 4
    radius = np.sqrt(-2.0 * np.log(u[:, :half]))
    angle = (2.0 * np.pi) * u[:, half:]
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)], axis=1)[:, :d]
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return (z * (scale / norms)).astype(np.float32)


def embed_corpus(
    corpus: Corpus,
    window: int,
    d: int,
    seed: int,
    scale: float = 1.0,
) -> EmbeddedCorpus:
    """Embed every corpus sequence, numbering sequences by corpus position."""
    sequences = [
        EmbeddedSequence(i, list(seq), synthetic_embed(seq, window, d, seed, scale))
        for i, seq in enumerate(corpus.sequences)
    ]
    return EmbeddedCorpus(d, sequences)

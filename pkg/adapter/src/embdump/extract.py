"""Run a pretrained encoder over a tokenized corpus and dump hidden states.

The corpus is already word-piece tokenized: one sequence per line, tokens
separated by single spaces, with a vocabulary file whose line numbers are the
encoder's token ids. Nothing here re-tokenizes; misaligned ids would silently
corrupt any per-type structure built downstream, so alignment is the caller's
contract and this module only validates it.

Output is an EMBD dump: magic ``EMBD``, u32 version 1, u32 d, u64 sequence
count, then per sequence a u64 id, u32 T, T u32 token ids and T*d little-
endian float32 values. The file appears atomically (temp file plus rename),
so readers never observe a half-written dump.
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch


class AdapterError(Exception):
    """Raised for anything that makes an extraction impossible or unsafe."""


@dataclass(frozen=True)
class AdapterConfig:
    checkpoint: str
    corpus: Path
    vocab: Path
    out: Path
    layer: int | str = "last"
    batch_size: int = 8
    device: str = "cpu"


@dataclass(frozen=True)
class ExtractReport:
    out: Path
    d: int
    num_sequences: int


def load_vocab(path: str | Path) -> dict[str, int]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise AdapterError(f"empty vocabulary file {path}")
    ids: dict[str, int] = {}
    for i, tok in enumerate(lines):
        if tok in ids:
            raise AdapterError(f"duplicate token {tok!r} at lines {ids[tok]} and {i}")
        ids[tok] = i
    return ids


def load_corpus(path: str | Path, vocab: dict[str, int]) -> list[list[int]]:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise AdapterError(f"empty corpus file {path}")
    sequences = []
    for lineno, line in enumerate(lines, start=1):
        if not line:
            raise AdapterError(f"{path}: empty sequence at line {lineno}")
        seq = []
        for tok in line.split(" "):
            if tok not in vocab:
                raise AdapterError(f"{path}: unknown token {tok!r} at line {lineno}")
            seq.append(vocab[tok])
        sequences.append(seq)
    return sequences


def _load_encoder(checkpoint: str, device: str):
    from transformers import AutoModel, AutoTokenizer

    try:
        model = AutoModel.from_pretrained(checkpoint)
    except Exception as exc:
        raise AdapterError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
    model.eval()
    model.to(device)
    try:
        tokenizer = AutoTokenizer.from_pretrained(checkpoint)
    except Exception:
        tokenizer = None  # encoders without a saved tokenizer get raw sequences
    return model, tokenizer


def _resolve_layer(layer: int | str, depth: int) -> int:
    # hidden-state index 0 is the embedding output, index depth the final layer
    if layer == "last":
        return depth
    if isinstance(layer, int):
        if not 0 <= layer <= depth:
            raise AdapterError(f"layer {layer} outside encoder depth {depth}")
        return layer
    raise AdapterError(f"layer selector must be 'last' or an integer, got {layer!r}")


def extract(config: AdapterConfig) -> ExtractReport:
    """Embed every corpus sequence and write the dump; returns what was written."""
    vocab = load_vocab(config.vocab)
    sequences = load_corpus(config.corpus, vocab)
    if config.batch_size < 1:
        raise AdapterError(f"batch size must be >= 1, got {config.batch_size}")
    model, tokenizer = _load_encoder(config.checkpoint, config.device)

    begin = tokenizer.cls_token_id if tokenizer is not None else None
    end = tokenizer.sep_token_id if tokenizer is not None else None
    wrap = begin is not None and end is not None
    pad = tokenizer.pad_token_id if tokenizer is not None and tokenizer.pad_token_id is not None else 0

    limit = model.get_input_embeddings().num_embeddings
    max_len = getattr(model.config, "max_position_embeddings", None)
    extra = 2 if wrap else 0
    for i, seq in enumerate(sequences):
        for w in seq:
            if w >= limit:
                raise AdapterError(
                    f"sequence {i}: token id {w} outside encoder vocabulary of size {limit}"
                )
        if max_len is not None and len(seq) + extra > max_len:
            raise AdapterError(
                f"sequence {i}: length {len(seq)} exceeds encoder limit "
                f"{max_len - extra}"
            )

    depth = int(model.config.num_hidden_layers)
    layer = _resolve_layer(config.layer, depth)

    vectors: list[np.ndarray] = []
    d: int | None = None
    with torch.no_grad():
        for start in range(0, len(sequences), config.batch_size):
            batch = sequences[start : start + config.batch_size]
            wrapped = [[begin] + seq + [end] if wrap else list(seq) for seq in batch]
            width = max(len(seq) for seq in wrapped)
            input_ids = torch.full((len(batch), width), pad, dtype=torch.long)
            mask = torch.zeros((len(batch), width), dtype=torch.long)
            for row, seq in enumerate(wrapped):
                input_ids[row, : len(seq)] = torch.tensor(seq, dtype=torch.long)
                mask[row, : len(seq)] = 1
            out = model(
                input_ids=input_ids.to(config.device),
                attention_mask=mask.to(config.device),
                output_hidden_states=True,
            )
            states = out.hidden_states[layer].cpu().numpy()
            d = states.shape[-1]
            lead = 1 if wrap else 0
            for row, seq in enumerate(batch):
                vectors.append(
                    np.ascontiguousarray(
                        states[row, lead : lead + len(seq)], dtype=np.float32
                    )
                )

    _write_dump(config.out, d, sequences, vectors)
    return ExtractReport(Path(config.out), d, len(sequences))


def _write_dump(
    path: str | Path,
    d: int,
    sequences: list[list[int]],
    vectors: list[np.ndarray],
) -> None:
    path = Path(path)
    parts = [b"EMBD", struct.pack("<II", 1, d), struct.pack("<Q", len(sequences))]
    for seq_id, (seq, vecs) in enumerate(zip(sequences, vectors)):
        parts.append(struct.pack("<QI", seq_id, len(seq)))
        parts.append(struct.pack(f"<{len(seq)}I", *seq))
        parts.append(vecs.astype("<f4").tobytes())
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(b"".join(parts))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

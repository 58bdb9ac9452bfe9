"""Encoder-side extraction of per-token hidden states into EMBD dumps."""

from .extract import (
    AdapterConfig,
    AdapterError,
    ExtractReport,
    extract,
    load_corpus,
    load_vocab,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "ExtractReport",
    "extract",
    "load_corpus",
    "load_vocab",
]

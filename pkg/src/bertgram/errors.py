"""Exception taxonomy shared across the package.

DataError covers everything caused by malformed input (text corpora,
binary dumps, config files); programmer misuse raises ValueError.
"""

from __future__ import annotations


class DataError(Exception):
    """Input data violates a documented contract."""


class CorpusError(DataError):
    """Corpus or vocabulary file cannot be interpreted."""


class FormatError(DataError):
    """Binary container violates its documented layout."""

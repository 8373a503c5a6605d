"""Shared text normalization for sparse ranking and n-gram metrics."""

from __future__ import annotations

import string

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, replace punctuation with spaces, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()

"""Text normalization and tokenization shared by graphs, models, and metrics.

A single normalizer keeps node merging, oracle lookups, and metric
tokenization mutually consistent: two phrases that merge into one graph
node also compare equal everywhere else.
"""

from __future__ import annotations

import re

_WHITESPACE = re.compile(r"\s+")

# Stripped from the end of a phrase only; interior punctuation is meaning.
_TERMINAL_PUNCT = ".,;:!?"


def normalize_text(text: str) -> str:
    """Lowercase, trim, collapse whitespace, and drop terminal punctuation."""
    out = _WHITESPACE.sub(" ", text.strip().lower())
    return out.rstrip(_TERMINAL_PUNCT).rstrip()


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokenization, shared by models and metrics."""
    return text.lower().split()

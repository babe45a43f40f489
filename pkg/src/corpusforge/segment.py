"""Rule-based sentence segmentation with an abbreviation stop-list.

The default segmenter splits on sentence-final punctuation (. ! ? ...)
followed by whitespace and an uppercase letter or digit, except after a
known abbreviation. Concatenating the returned segments with the consumed
separators reconstructs the input, so segmentation never loses text.
Segmenters are pluggable: anything callable as segment(text) -> list[str].
"""

from __future__ import annotations

import re
from typing import Callable

Segmenter = Callable[[str], list[str]]

# Italian abbreviations that must not terminate a sentence.
DEFAULT_ABBREVIATIONS = frozenset({
    "sig.", "dott.", "ecc.", "es.", "pag.",
    "sig.ra", "prof.", "ing.", "n.", "art.",
})

_BOUNDARY = re.compile(r"([.!?…]+)(\s+)(?=[A-Z0-9À-Þ])")


def _ends_with_abbreviation(prefix: str, abbreviations: frozenset[str]) -> bool:
    last = prefix.rsplit(None, 1)[-1].lower() if prefix.strip() else ""
    return last in abbreviations


def segment_sentences(
    text: str,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[str]:
    """Split text into sentences; empty input yields an empty list."""
    if not text.strip():
        return []
    sentences: list[str] = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        candidate = text[start: m.end(1)]
        if _ends_with_abbreviation(candidate, abbreviations):
            continue
        sentences.append(candidate.strip())
        start = m.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences

"""Language detection contract and a built-in stopword-based detector.

The contract is pluggable: any detect(text) -> (iso_code, confidence) that
is deterministic for fixed input works. The built-in detector scores
function-word hits for a small set of languages; it is crude but has no
model dependency, which keeps the refinement pipeline self-contained.
"""

from __future__ import annotations

import re
from typing import Protocol


class DetectorFailure(RuntimeError):
    def __init__(self, message_id: str, reason: str):
        super().__init__(f"language detection failed for {message_id}: {reason}")
        self.message_id = message_id


class LanguageDetector(Protocol):
    def detect(self, text: str) -> tuple[str, float]:
        ...


_WORD = re.compile(r"[a-zàèéìòùáíóú']+", re.IGNORECASE)

_STOPWORDS: dict[str, frozenset[str]] = {
    "en": frozenset("""
        the a an and or but of to in is are was were be been it this that
        you i he she we they with for on at by from have has had not do
        does did will would can could should as if then than what which
        how your my his her our their there here over under about
    """.split()),
    "it": frozenset("""
        il lo la i gli le un uno una e o ma di a da in con su per tra fra
        è sono era erano essere stato che questo quella tu io lui lei noi
        voi loro non fare fa ha hanno aveva sarà può come se poi cosa
        quale dove quando perché più anche molto ciao sul della delle
        degli nel nella come mi ti ci si posso puoi grazie bene buongiorno
        oggi va così ecco certo questa questi queste sei
    """.split()),
    "de": frozenset("""
        der die das ein eine und oder aber von zu in ist sind war waren
        sein es nicht ich du er sie wir ihr mit für auf bei aus wie wenn
        dann als was welche wo wann warum auch sehr
    """.split()),
}


class StopwordDetector:
    """Deterministic heuristic detector over a fixed stopword inventory."""

    def __init__(self, languages: dict[str, frozenset[str]] | None = None):
        self.languages = languages if languages is not None else _STOPWORDS

    def detect(self, text: str) -> tuple[str, float]:
        words = [w.lower() for w in _WORD.findall(text)]
        if not words:
            return ("und", 0.0)  # ISO 639 "undetermined"
        hits = {
            code: sum(1 for w in words if w in vocab)
            for code, vocab in self.languages.items()
        }
        total = sum(hits.values())
        if total == 0:
            return ("und", 0.0)
        # Deterministic tie-break: highest hit count, then code order.
        best = min(hits, key=lambda c: (-hits[c], c))
        return (best, hits[best] / total)

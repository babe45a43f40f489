"""Core data types for chat corpora: messages, conversations, corpus manifest.

All types are immutable after construction (frozen dataclasses) and safe to
share across threads. Transformations return new objects.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import xxhash


class Role(str, Enum):
    SYSTEM = "system"
    HUMAN = "human"
    ASSISTANT = "assistant"


class Origin(str, Enum):
    FAUNO = "fauno"
    OASST = "oasst"
    GENERATED = "generated"


class ContentClass(str, Enum):
    NATURAL_TEXT = "natural_text"
    CODE = "code"


@dataclass(frozen=True)
class LanguageTag:
    code: str  # ISO 639-1
    confidence: float  # in [0, 1]


@dataclass(frozen=True)
class Message:
    id: str
    role: Role
    text: str
    content_hash: Optional[int] = None  # xxhash64 of canonical text, seed 0
    detected_language: Optional[LanguageTag] = None
    content_class: Optional[ContentClass] = None
    quality_nll: Optional[float] = None  # nats per token, >= 0

    def __post_init__(self):
        if self.quality_nll is not None and self.quality_nll < 0:
            raise ValueError(f"quality_nll must be >= 0, got {self.quality_nll}")

    def with_hash(self) -> "Message":
        return replace(self, content_hash=hash_text(self.text))


@dataclass(frozen=True)
class Conversation:
    id: str
    origin: Origin
    messages: tuple[Message, ...]
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [m.id for m in self.messages]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate message ids in conversation {self.id}")

    def non_system(self) -> list[Message]:
        return [m for m in self.messages if m.role is not Role.SYSTEM]


@dataclass(frozen=True)
class StageReport:
    stage_name: str
    input_conversations: int
    removed_conversations: int = 0
    removed_messages: int = 0
    flagged_messages: int = 0
    params_digest: str = ""

    def __post_init__(self):
        if self.removed_conversations > self.input_conversations:
            raise ValueError("removed_conversations exceeds input_conversations")
        for v in (self.input_conversations, self.removed_conversations,
                  self.removed_messages, self.flagged_messages):
            if v < 0:
                raise ValueError("StageReport counts must be non-negative")


@dataclass(frozen=True)
class Corpus:
    conversations: tuple[Conversation, ...]
    manifest: tuple[StageReport, ...] = ()

    def __post_init__(self):
        ids = [c.id for c in self.conversations]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate conversation ids in corpus")

    def __len__(self) -> int:
        return len(self.conversations)

    def with_stage(self, conversations, report: StageReport) -> "Corpus":
        return Corpus(tuple(conversations), self.manifest + (report,))


_CRLF = re.compile(r"\r\n?")


def canonicalize_text(raw: str) -> str:
    """NFC-normalize, convert CR/CRLF to LF, and trim outer whitespace.

    Internal whitespace is preserved; no case folding. Dedup counts depend
    on near-exact matching, so normalization is deliberately minimal.
    """
    return unicodedata.normalize("NFC", _CRLF.sub("\n", raw)).strip()


def hash_text(text: str) -> int:
    """xxhash64 (seed 0) of the UTF-8 bytes of canonical text."""
    return xxhash.xxh64(canonicalize_text(text).encode("utf-8"), seed=0).intdigest()


class UnparseableTranscript(ValueError):
    """Raised when a raw transcript contains no recognizable speaker tag."""

    def __init__(self, reason: str, byte_offset: int):
        super().__init__(f"{reason} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


# Tolerant speaker-tag grammar: brackets with optional inner pipes and
# whitespace, case-insensitive role word, role aliases.
_TAG = re.compile(
    r"\[\s*\|?\s*(umano|human|ai)\s*\|?\s*\]",
    re.IGNORECASE,
)

_ROLE_ALIASES = {
    "umano": Role.HUMAN,
    "human": Role.HUMAN,
    "ai": Role.ASSISTANT,
}


def parse_raw_fauno(transcript: str, conversation_id: str = "fauno-0") -> Conversation:
    """Parse one raw tagged transcript into a Conversation.

    The first untagged block becomes the system prompt; each speaker tag
    starts a new message. Raises UnparseableTranscript when no tag is found.
    """
    matches = list(_TAG.finditer(transcript))
    if not matches:
        offset = len(transcript[: len(transcript.rstrip())].encode("utf-8"))
        raise UnparseableTranscript("no speaker tag found", offset)

    messages: list[Message] = []
    seq = 0

    head = canonicalize_text(transcript[: matches[0].start()])
    if head:
        messages.append(Message(id=f"{conversation_id}.m{seq}", role=Role.SYSTEM, text=head))
        seq += 1

    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(transcript)
        role = _ROLE_ALIASES[m.group(1).lower()]
        text = canonicalize_text(transcript[m.end(): end])
        messages.append(Message(id=f"{conversation_id}.m{seq}", role=role, text=text))
        seq += 1

    return Conversation(id=conversation_id, origin=Origin.FAUNO, messages=tuple(messages))


def split_fauno_records(raw: str, delimiter: str = "\n===\n") -> list[str]:
    """Split a concatenated multi-record file into individual transcripts.

    The upstream layout is unknown (one-per-file vs concatenated); both are
    accepted. A file without the delimiter is a single record.
    """
    parts = [p for p in raw.split(delimiter) if p.strip()]
    return parts

"""JSONL persistence for corpora: one conversation per line, manifest sidecar.

Schema (exact key names):
  {"id": str, "origin": "fauno"|"oasst"|"generated", "provenance": {str: str},
   "messages": [{"id": str, "role": str, "text": str,
                 "content_hash": uint64-as-decimal-string|null,
                 "detected_language": {"code": str, "confidence": float}|null,
                 "content_class": "natural_text"|"code"|null,
                 "quality_nll": float|null}]}

content_hash is serialized as a decimal string: 64-bit integers do not
survive JSON number precision in every consumer.
"""

from __future__ import annotations

import json
import os
from typing import Iterator

from .model import (
    ContentClass,
    Conversation,
    Corpus,
    LanguageTag,
    Message,
    Origin,
    Role,
    StageReport,
)


class MalformedRecord(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateConversationId(ValueError):
    def __init__(self, conversation_id: str):
        super().__init__(f"duplicate conversation id: {conversation_id}")
        self.conversation_id = conversation_id


def manifest_path(path: str) -> str:
    return f"{path}.manifest.json"


def message_to_dict(m: Message) -> dict:
    return {
        "id": m.id,
        "role": m.role.value,
        "text": m.text,
        "content_hash": str(m.content_hash) if m.content_hash is not None else None,
        "detected_language": (
            {"code": m.detected_language.code, "confidence": m.detected_language.confidence}
            if m.detected_language is not None else None
        ),
        "content_class": m.content_class.value if m.content_class is not None else None,
        "quality_nll": m.quality_nll,
    }


def conversation_to_dict(c: Conversation) -> dict:
    return {
        "id": c.id,
        "origin": c.origin.value,
        "provenance": dict(c.provenance),
        "messages": [message_to_dict(m) for m in c.messages],
    }


def _require(record: dict, key: str, line: int):
    if key not in record:
        raise MalformedRecord(line, f"missing {key!r}")
    return record[key]


def message_from_dict(d: dict, line: int = 0) -> Message:
    if not isinstance(d, dict):
        raise MalformedRecord(line, "message is not an object")
    role_raw = _require(d, "role", line)
    try:
        role = Role(role_raw)
    except ValueError:
        raise MalformedRecord(line, f"unknown role {role_raw!r}")
    lang = d.get("detected_language")
    cclass = d.get("content_class")
    try:
        return Message(
            id=str(_require(d, "id", line)),
            role=role,
            text=str(_require(d, "text", line)),
            content_hash=int(d["content_hash"]) if d.get("content_hash") is not None else None,
            detected_language=(
                LanguageTag(code=lang["code"], confidence=float(lang["confidence"]))
                if lang is not None else None
            ),
            content_class=ContentClass(cclass) if cclass is not None else None,
            quality_nll=d.get("quality_nll"),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, MalformedRecord):
            raise
        raise MalformedRecord(line, str(e))


def conversation_from_dict(d: dict, line: int = 0) -> Conversation:
    if not isinstance(d, dict):
        raise MalformedRecord(line, "record is not an object")
    origin_raw = _require(d, "origin", line)
    try:
        origin = Origin(origin_raw)
    except ValueError:
        raise MalformedRecord(line, f"unknown origin {origin_raw!r}")
    messages = _require(d, "messages", line)
    if not isinstance(messages, list):
        raise MalformedRecord(line, "messages is not a list")
    provenance = d.get("provenance", {})
    if not isinstance(provenance, dict):
        raise MalformedRecord(line, "provenance is not an object")
    try:
        return Conversation(
            id=str(_require(d, "id", line)),
            origin=origin,
            messages=tuple(message_from_dict(m, line) for m in messages),
            provenance={str(k): str(v) for k, v in provenance.items()},
        )
    except ValueError as e:
        if isinstance(e, MalformedRecord):
            raise
        raise MalformedRecord(line, str(e))


def report_to_dict(r: StageReport) -> dict:
    return {
        "stage_name": r.stage_name,
        "input_conversations": r.input_conversations,
        "removed_conversations": r.removed_conversations,
        "removed_messages": r.removed_messages,
        "flagged_messages": r.flagged_messages,
        "params_digest": r.params_digest,
    }


def report_from_dict(d: dict) -> StageReport:
    return StageReport(**d)


def iter_corpus_jsonl(path: str) -> Iterator[Conversation]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(lineno, f"invalid JSON: {e}")
            yield conversation_from_dict(record, lineno)


def read_corpus_jsonl(path: str) -> Corpus:
    conversations: list[Conversation] = []
    seen: set[str] = set()
    for conv in iter_corpus_jsonl(path):
        if conv.id in seen:
            raise DuplicateConversationId(conv.id)
        seen.add(conv.id)
        conversations.append(conv)

    manifest: tuple[StageReport, ...] = ()
    mpath = manifest_path(path)
    if os.path.exists(mpath):
        with open(mpath, "r", encoding="utf-8") as f:
            manifest = tuple(report_from_dict(d) for d in json.load(f))
    return Corpus(tuple(conversations), manifest)


def write_corpus_jsonl(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for conv in corpus.conversations:
            f.write(json.dumps(conversation_to_dict(conv), ensure_ascii=False))
            f.write("\n")
    if corpus.manifest:
        with open(manifest_path(path), "w", encoding="utf-8") as f:
            json.dump([report_to_dict(r) for r in corpus.manifest], f, indent=2)
            f.write("\n")

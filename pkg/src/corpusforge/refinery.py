"""Multi-stage corpus refinement: empty removal, flow validation, hash
dedup, language annotation, system-prompt stripping, zero-shot text/code
triage, and the English-message policy. Every stage returns the refined
corpus plus an auditable StageReport; run_refinement chains them in the
fixed pipeline order and is idempotent.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .clients import ChatClient, TransportError
from .language import DetectorFailure, LanguageDetector, StopwordDetector
from .model import (
    ContentClass,
    Conversation,
    Corpus,
    LanguageTag,
    Message,
    Role,
    StageReport,
)


class MissingHash(ValueError):
    def __init__(self, message_id: str):
        super().__init__(f"message {message_id} has no content_hash")
        self.message_id = message_id


class EnglishPolicy(str, Enum):
    FLAG_ONLY = "flag_only"
    DROP_MESSAGE = "drop_message"
    DROP_CONVERSATION = "drop_conversation"


@dataclass(frozen=True)
class FlowPattern:
    expected_first_role_after_system: Role = Role.HUMAN
    strict_alternation: bool = True

    def __post_init__(self):
        if self.expected_first_role_after_system is Role.SYSTEM:
            raise ValueError("first role after system must be human or assistant")


DEFAULT_TRIAGE_PROMPT = (
    "Classify the following message as natural language text or source code. "
    "Reply with exactly one word, TEXT or CODE.\n\n{message}"
)


@dataclass(frozen=True)
class RefineConfig:
    flow: FlowPattern = FlowPattern()
    dedup_fraction_threshold: float = 0.5
    lang_min_confidence: float = 0.7
    english_policy: EnglishPolicy = EnglishPolicy.FLAG_ONLY
    triage_prompt_template: str = DEFAULT_TRIAGE_PROMPT
    triage_max_retries: int = 3
    jobs: int = 1


def params_digest(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def ensure_hashes(corpus: Corpus) -> Corpus:
    """Populate content_hash on every message (recomputed, deterministic)."""
    convs = [
        replace(c, messages=tuple(
            m if m.content_hash is not None else m.with_hash() for m in c.messages
        ))
        for c in corpus.conversations
    ]
    return Corpus(tuple(convs), corpus.manifest)


def drop_empty(corpus: Corpus) -> tuple[Corpus, StageReport]:
    """Remove conversations devoid of content: every non-system message
    empty, or no non-system messages at all."""
    kept, removed_msgs = [], 0
    for conv in corpus.conversations:
        non_system = conv.non_system()
        if non_system and any(m.text for m in non_system):
            kept.append(conv)
        else:
            removed_msgs += len(conv.messages)
    report = StageReport(
        stage_name="drop_empty",
        input_conversations=len(corpus),
        removed_conversations=len(corpus) - len(kept),
        removed_messages=removed_msgs,
        params_digest=params_digest({}),
    )
    return corpus.with_stage(kept, report), report


def _flow_ok(conv: Conversation, pattern: FlowPattern) -> bool:
    roles = [m.role for m in conv.non_system()]
    if not roles:
        return False
    expected = pattern.expected_first_role_after_system
    for role in roles:
        if role != expected:
            return False
        if pattern.strict_alternation:
            expected = Role.HUMAN if expected is Role.ASSISTANT else Role.ASSISTANT
    return True


def validate_flow(corpus: Corpus, pattern: FlowPattern) -> tuple[Corpus, StageReport]:
    """Remove conversations whose non-system roles break the configured
    alternation pattern."""
    kept, removed_msgs = [], 0
    for conv in corpus.conversations:
        if _flow_ok(conv, pattern):
            kept.append(conv)
        else:
            removed_msgs += len(conv.messages)
    report = StageReport(
        stage_name="validate_flow",
        input_conversations=len(corpus),
        removed_conversations=len(corpus) - len(kept),
        removed_messages=removed_msgs,
        params_digest=params_digest({
            "first_role": pattern.expected_first_role_after_system.value,
            "strict": pattern.strict_alternation,
        }),
    )
    return corpus.with_stage(kept, report), report


def dedup_conversations(
    corpus: Corpus, fraction_threshold: float = 0.5
) -> tuple[Corpus, StageReport]:
    """Remove conversations with more than fraction_threshold of their
    non-system messages duplicated in OTHER conversations.

    Verdicts are computed once against the pre-stage corpus; the strict >
    comparison keeps exactly-at-threshold conversations. System messages
    are excluded from both numerator and denominator (they are
    near-constant and would dominate the fraction).
    """
    hash_owners: dict[int, set[str]] = {}
    for conv in corpus.conversations:
        for m in conv.non_system():
            if m.content_hash is None:
                raise MissingHash(m.id)
            hash_owners.setdefault(m.content_hash, set()).add(conv.id)

    kept, removed_msgs = [], 0
    for conv in corpus.conversations:
        non_system = conv.non_system()
        duplicated = sum(
            1 for m in non_system
            if len(hash_owners[m.content_hash] - {conv.id}) > 0
        )
        if non_system and duplicated / len(non_system) > fraction_threshold:
            removed_msgs += len(conv.messages)
        else:
            kept.append(conv)
    report = StageReport(
        stage_name="dedup_conversations",
        input_conversations=len(corpus),
        removed_conversations=len(corpus) - len(kept),
        removed_messages=removed_msgs,
        params_digest=params_digest({"fraction_threshold": fraction_threshold}),
    )
    return corpus.with_stage(kept, report), report


def annotate_language(
    corpus: Corpus,
    detector: Optional[LanguageDetector] = None,
    min_confidence: float = 0.7,
) -> tuple[Corpus, StageReport]:
    """Set detected_language on every message; the report flags messages
    detected as English at or above min_confidence."""
    detector = detector if detector is not None else StopwordDetector()
    flagged = 0
    convs = []
    for conv in corpus.conversations:
        msgs = []
        for m in conv.messages:
            try:
                code, confidence = detector.detect(m.text)
            except Exception as e:  # detector contract violation
                raise DetectorFailure(m.id, str(e)) from e
            tag = LanguageTag(code=code, confidence=confidence)
            if code == "en" and confidence >= min_confidence:
                flagged += 1
            msgs.append(replace(m, detected_language=tag))
        convs.append(replace(conv, messages=tuple(msgs)))
    report = StageReport(
        stage_name="annotate_language",
        input_conversations=len(corpus),
        flagged_messages=flagged,
        params_digest=params_digest({"min_confidence": min_confidence}),
    )
    return corpus.with_stage(convs, report), report


def strip_system_prompts(corpus: Corpus) -> tuple[Corpus, StageReport]:
    """Drop all system-role messages; conversations left empty are removed
    (counted as removed_conversations, their prompts still in
    removed_messages)."""
    kept, removed_convs, removed_msgs = [], 0, 0
    for conv in corpus.conversations:
        remaining = tuple(m for m in conv.messages if m.role is not Role.SYSTEM)
        removed_msgs += len(conv.messages) - len(remaining)
        if remaining:
            kept.append(replace(conv, messages=remaining))
        else:
            removed_convs += 1
    report = StageReport(
        stage_name="strip_system_prompts",
        input_conversations=len(corpus),
        removed_conversations=removed_convs,
        removed_messages=removed_msgs,
        params_digest=params_digest({}),
    )
    return corpus.with_stage(kept, report), report


def _is_flagged(m: Message, min_confidence: float) -> bool:
    return (
        m.detected_language is not None
        and m.detected_language.code == "en"
        and m.detected_language.confidence >= min_confidence
    )


def _triage_one(
    text: str, chat_client: ChatClient, template: str, max_retries: int
) -> Optional[ContentClass]:
    prompt = template.format(message=text)
    for _ in range(max_retries + 1):
        try:
            reply = chat_client.complete([("user", prompt)])
        except TransportError:
            continue
        word = reply.strip().strip(".").upper()
        if word == "TEXT":
            return ContentClass.NATURAL_TEXT
        if word == "CODE":
            return ContentClass.CODE
    return None


def triage_text_vs_code(
    corpus: Corpus,
    chat_client: ChatClient,
    template: str = DEFAULT_TRIAGE_PROMPT,
    max_retries: int = 3,
    min_confidence: float = 0.7,
    jobs: int = 1,
) -> tuple[Corpus, StageReport]:
    """Zero-shot classify flagged (English) messages as text vs code via the
    chat endpoint. Messages still unparseable after retries keep a null
    content_class and are counted in flagged_messages."""
    targets: list[tuple[int, int, Message]] = []
    for ci, conv in enumerate(corpus.conversations):
        for mi, m in enumerate(conv.messages):
            if _is_flagged(m, min_confidence) and m.content_class is None:
                targets.append((ci, mi, m))

    if jobs > 1 and targets:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(
                lambda t: _triage_one(t[2].text, chat_client, template, max_retries),
                targets,
            ))
    else:
        results = [
            _triage_one(m.text, chat_client, template, max_retries)
            for _, _, m in targets
        ]

    classified: dict[tuple[int, int], Optional[ContentClass]] = {
        (ci, mi): cls for (ci, mi, _), cls in zip(targets, results)
    }
    unclassified = sum(1 for cls in results if cls is None)

    convs = []
    for ci, conv in enumerate(corpus.conversations):
        msgs = tuple(
            replace(m, content_class=classified[(ci, mi)])
            if (ci, mi) in classified and classified[(ci, mi)] is not None else m
            for mi, m in enumerate(conv.messages)
        )
        convs.append(replace(conv, messages=msgs))
    report = StageReport(
        stage_name="triage_text_vs_code",
        input_conversations=len(corpus),
        flagged_messages=unclassified,
        params_digest=params_digest({
            "template": template, "max_retries": max_retries,
            "min_confidence": min_confidence,
        }),
    )
    return corpus.with_stage(convs, report), report


def apply_english_policy(
    corpus: Corpus,
    policy: EnglishPolicy = EnglishPolicy.FLAG_ONLY,
    min_confidence: float = 0.7,
) -> tuple[Corpus, StageReport]:
    """Act on genuine-English messages (flagged AND classified natural_text).

    Default flag_only leaves the corpus unchanged and only reports
    candidates, which matched the source pipeline's outcome (the flagged
    messages were overwhelmingly code or false positives).
    """
    def genuine(m: Message) -> bool:
        return _is_flagged(m, min_confidence) and m.content_class is ContentClass.NATURAL_TEXT

    kept, removed_convs, removed_msgs, candidates = [], 0, 0, 0
    for conv in corpus.conversations:
        hits = [m for m in conv.messages if genuine(m)]
        candidates += len(hits)
        if not hits or policy is EnglishPolicy.FLAG_ONLY:
            kept.append(conv)
        elif policy is EnglishPolicy.DROP_CONVERSATION:
            removed_convs += 1
            removed_msgs += len(conv.messages)
        else:  # DROP_MESSAGE
            remaining = tuple(m for m in conv.messages if not genuine(m))
            removed_msgs += len(hits)
            if remaining:
                kept.append(replace(conv, messages=remaining))
            else:
                removed_convs += 1
    report = StageReport(
        stage_name="apply_english_policy",
        input_conversations=len(corpus),
        removed_conversations=removed_convs,
        removed_messages=removed_msgs,
        flagged_messages=candidates,
        params_digest=params_digest({
            "policy": policy.value, "min_confidence": min_confidence,
        }),
    )
    return corpus.with_stage(kept, report), report


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_refinement(
    corpus: Corpus,
    config: RefineConfig = RefineConfig(),
    detector: Optional[LanguageDetector] = None,
    chat_client: Optional[ChatClient] = None,
) -> Corpus:
    """Run the full refinement chain in pipeline order. The returned corpus
    carries one StageReport per stage in its manifest. Idempotent: a second
    run removes nothing. Triage is skipped when no chat client is given
    (content_class stays null, so flag_only policies report zero)."""
    corpus = ensure_hashes(corpus)
    stages = [
        ("drop_empty", lambda c: drop_empty(c)),
        ("validate_flow", lambda c: validate_flow(c, config.flow)),
        ("dedup_conversations",
         lambda c: dedup_conversations(c, config.dedup_fraction_threshold)),
        ("annotate_language",
         lambda c: annotate_language(c, detector, config.lang_min_confidence)),
        ("strip_system_prompts", lambda c: strip_system_prompts(c)),
    ]
    if chat_client is not None:
        stages.append(("triage_text_vs_code", lambda c: triage_text_vs_code(
            c, chat_client, config.triage_prompt_template,
            config.triage_max_retries, config.lang_min_confidence, config.jobs,
        )))
    stages.append(("apply_english_policy", lambda c: apply_english_policy(
        c, config.english_policy, config.lang_min_confidence,
    )))

    for name, stage in stages:
        try:
            corpus, _ = stage(corpus)
        except (MissingHash, DetectorFailure) as e:
            raise StageError(name, e) from e
    return corpus

"""Embedding-gated self-chat generation.

A generator chat model extends sampled seed conversations turn by turn;
every candidate message is embedded and checked against the vector store.
Candidates whose cosine similarity to any stored vector exceeds the
threshold (strictly above) are rejected and regenerated; accepted messages
enter both the conversation and the store, so later turns are implicitly
checked against earlier ones.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

from .clients import ChatClient, EmbedderClient, TransportError
from .embedding import EmptyStore, VectorStore
from .model import (
    Conversation,
    Corpus,
    Message,
    Origin,
    Role,
    StageReport,
    canonicalize_text,
)


class EmptySeedPool(ValueError):
    pass


DEFAULT_PROMPT_TEMPLATES = {
    Role.HUMAN: (
        "Questa è una conversazione tra un utente umano e un assistente AI.\n"
        "{transcript}\n"
        "Scrivi il prossimo messaggio dell'utente umano. Rispondi solo con il "
        "testo del messaggio, in italiano."
    ),
    Role.ASSISTANT: (
        "Questa è una conversazione tra un utente umano e un assistente AI.\n"
        "{transcript}\n"
        "Scrivi la prossima risposta dell'assistente AI. Rispondi solo con il "
        "testo della risposta, in italiano."
    ),
}


@dataclass(frozen=True)
class GenerationConfig:
    n_seeds: int = 10
    target_length_min: int = 4
    target_length_max: int = 10
    similarity_threshold: float = 0.9
    max_retries_per_turn: int = 3
    rng_seed: int = 0
    prompt_templates: dict = field(default_factory=lambda: dict(DEFAULT_PROMPT_TEMPLATES))
    model: str = "default"
    temperature: float = 0.7
    max_tokens: int = 512

    def __post_init__(self):
        if not (1 <= self.target_length_min <= self.target_length_max):
            raise ValueError("need 1 <= target_length_min <= target_length_max")
        if not (0.0 < self.similarity_threshold <= 1.0):
            raise ValueError("similarity_threshold must be in (0, 1]")

    def digest(self) -> str:
        blob = json.dumps({
            "n_seeds": self.n_seeds,
            "target_length": [self.target_length_min, self.target_length_max],
            "similarity_threshold": self.similarity_threshold,
            "max_retries_per_turn": self.max_retries_per_turn,
            "rng_seed": self.rng_seed,
            "prompt_templates": {r.value: t for r, t in self.prompt_templates.items()},
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Accepted:
    message: Message
    similarity: Optional[float]  # max similarity at acceptance; None if store was empty
    store_id: int
    store_size_at_check: int


@dataclass(frozen=True)
class RejectedSimilar:
    similarity: float
    nearest_id: int


@dataclass(frozen=True)
class Exhausted:
    rejections: tuple[RejectedSimilar, ...]


TurnOutcome = Union[Accepted, RejectedSimilar, Exhausted]


def sample_seeds(
    seeds: Sequence[Conversation], cfg: GenerationConfig, rng: random.Random
) -> list[Conversation]:
    """Uniform sample without replacement, clamped to the pool size."""
    if not seeds:
        raise EmptySeedPool("no seed conversations available")
    return rng.sample(list(seeds), min(cfg.n_seeds, len(seeds)))


def sample_target_length(cfg: GenerationConfig, rng: random.Random) -> int:
    return rng.randint(cfg.target_length_min, cfg.target_length_max)


def render_transcript(conversation: Conversation) -> str:
    labels = {Role.SYSTEM: "Sistema", Role.HUMAN: "Umano", Role.ASSISTANT: "AI"}
    return "\n".join(f"{labels[m.role]}: {m.text}" for m in conversation.messages)


def _next_role(conversation: Conversation) -> Role:
    last = conversation.messages[-1].role
    return Role.HUMAN if last is Role.ASSISTANT else Role.ASSISTANT


def next_turn(
    conversation: Conversation,
    cfg: GenerationConfig,
    chat_client: ChatClient,
    embedder: EmbedderClient,
    store: VectorStore,
) -> TurnOutcome:
    """Generate one turn: prompt, embed, diversity-check, append-or-retry.

    Similarity strictly above the threshold rejects the candidate; a fresh
    model call is made for each retry. On acceptance the message's embedding
    is added to the store before returning.
    """
    role = _next_role(conversation)
    template = cfg.prompt_templates[role]
    prompt = template.format(transcript=render_transcript(conversation))
    rejections: list[RejectedSimilar] = []

    for _ in range(cfg.max_retries_per_turn + 1):
        reply = chat_client.complete(
            [("user", prompt)],
            model=cfg.model, temperature=cfg.temperature, max_tokens=cfg.max_tokens,
        )
        text = canonicalize_text(reply)
        vector = embedder.embed_batch([text])[0]
        try:
            similarity, nearest = store.max_similarity(vector)
        except EmptyStore:
            similarity, nearest = None, None
        if similarity is not None and similarity > cfg.similarity_threshold:
            rejections.append(RejectedSimilar(similarity, nearest))
            continue
        size_at_check = len(store)
        store_id = store.add(vector)
        message = Message(
            id=f"{conversation.id}.g{len(conversation.messages)}",
            role=role,
            text=text,
        ).with_hash()
        return Accepted(message, similarity, store_id, size_at_check)
    return Exhausted(tuple(rejections))


@dataclass
class AcceptanceLogEntry:
    conversation_id: str
    message_id: str
    similarity: Optional[float]
    store_id: int
    store_size_at_check: int


@dataclass
class CampaignResult:
    corpus: Corpus
    store: VectorStore
    accepted: int
    rejected: int
    failed_conversations: list[str]
    acceptance_log: list[AcceptanceLogEntry]


def generate_conversation(
    seed: Conversation,
    cfg: GenerationConfig,
    chat_client: ChatClient,
    embedder: EmbedderClient,
    store: VectorStore,
    target_length: int,
    log: Optional[list[AcceptanceLogEntry]] = None,
) -> tuple[Conversation, int, int]:
    """Extend a seed to target_length messages (seed included); stops early
    when the diversity filter exhausts retries. Returns the conversation
    plus (accepted, rejected) counts."""
    conv = Conversation(
        id=f"gen-{seed.id}",
        origin=Origin.GENERATED,
        messages=seed.messages,
        provenance={
            **seed.provenance,
            "seed_id": seed.id,
            "target_length": str(target_length),
            "config_digest": cfg.digest(),
        },
    )
    accepted = rejected = 0
    while len(conv.messages) < target_length:
        try:
            outcome = next_turn(conv, cfg, chat_client, embedder, store)
        except TransportError as e:
            # Abort this conversation only; keep partial progress on record.
            conv = replace(conv, provenance={
                **conv.provenance, "aborted": f"transport_error: {e}",
            })
            break
        if isinstance(outcome, Accepted):
            accepted += 1
            conv = replace(conv, messages=conv.messages + (outcome.message,))
            if log is not None:
                log.append(AcceptanceLogEntry(
                    conv.id, outcome.message.id, outcome.similarity,
                    outcome.store_id, outcome.store_size_at_check,
                ))
        else:  # Exhausted
            rejected += len(outcome.rejections)
            conv = replace(conv, provenance={
                **conv.provenance,
                "early_termination": "diversity_exhausted",
            })
            break
    return conv, accepted, rejected


def run_campaign(
    seed_pool: Sequence[Conversation],
    cfg: GenerationConfig,
    chat_client: ChatClient,
    embedder: EmbedderClient,
    store: Optional[VectorStore] = None,
) -> CampaignResult:
    """Run one generation campaign: pre-populate the store with every seed
    message, sample seeds, and generate each conversation. A per-conversation
    transport failure is recorded; the campaign fails only if every
    conversation fails."""
    if not seed_pool:
        raise EmptySeedPool("no seed conversations available")

    all_texts = [m.text for conv in seed_pool for m in conv.messages]
    vectors = embedder.embed_batch(all_texts)
    if store is None:
        store = VectorStore(dimension=len(vectors[0]))
    for v in vectors:
        store.add(v)
    prepopulated = len(store)

    rng = random.Random(cfg.rng_seed)
    sampled = sample_seeds(seed_pool, cfg, rng)

    conversations: list[Conversation] = []
    failed: list[str] = []
    log: list[AcceptanceLogEntry] = []
    accepted_total = rejected_total = 0
    for index, seed in enumerate(sampled):
        # Per-conversation RNG split keeps parallel generation deterministic.
        conv_rng = random.Random(f"{cfg.rng_seed}:{index}")
        target = sample_target_length(cfg, conv_rng)
        conv, accepted, rejected = generate_conversation(
            seed, cfg, chat_client, embedder, store, target, log,
        )
        if "aborted" in conv.provenance:
            failed.append(seed.id)
        accepted_total += accepted
        rejected_total += rejected
        conversations.append(conv)

    if len(failed) == len(sampled):
        raise TransportError("all conversations in the campaign failed")

    report = StageReport(
        stage_name="selfchat_campaign",
        input_conversations=len(sampled),
        removed_conversations=len(failed),
        flagged_messages=rejected_total,
        params_digest=cfg.digest(),
    )
    corpus = Corpus(tuple(conversations), (report,))
    result = CampaignResult(
        corpus=corpus,
        store=store,
        accepted=accepted_total,
        rejected=rejected_total,
        failed_conversations=failed,
        acceptance_log=log,
    )
    assert len(store) == prepopulated + accepted_total
    return result

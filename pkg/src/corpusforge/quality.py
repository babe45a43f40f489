"""Masked-LM quality metric: mean negative log-likelihood per token.

Each token of a sentence is scored with that token masked and the rest of
the sentence visible; the sentence score is the mean of the negative
natural-log probabilities (nats per token). Message scores aggregate
sentence scores token-count-weighted, so with mean aggregation the message
score equals the whole-message token mean. Filtering retains messages
strictly below the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from .clients import MlmScorerClient, TokenScore, TransportError
from .embedding import HistogramSummary, histogram
from .model import Conversation, Corpus, Message, Role, StageReport
from .refinery import _flow_ok, FlowPattern, params_digest
from .segment import segment_sentences


class EmptyText(ValueError):
    pass


class ZeroTokens(RuntimeError):
    pass


class ScoringFailed(RuntimeError):
    def __init__(self, message_id: str, reason: str):
        super().__init__(f"scoring failed for message {message_id}: {reason}")
        self.message_id = message_id


@dataclass(frozen=True)
class SentenceScore:
    sentence: str
    n_tokens: int
    nll: float  # nats per token, >= 0

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")
        if self.nll < 0:
            raise ValueError("nll must be >= 0")


# Conservative words-per-window margin: a word is one or more subword
# tokens, so a window of max_tokens/2 words rarely exceeds max_tokens.
_WINDOW_WORD_DIVISOR = 2


def _score_windowed(text: str, scorer: MlmScorerClient) -> list[TokenScore]:
    """Score text, splitting into word windows when it may exceed the
    scorer's context. Window scores concatenate; token-count weighting then
    happens naturally in the caller's mean."""
    words = text.split()
    limit = max(1, scorer.max_tokens // _WINDOW_WORD_DIVISOR)
    if len(words) <= limit:
        return scorer.score(text)
    scores: list[TokenScore] = []
    for start in range(0, len(words), limit):
        window = " ".join(words[start: start + limit])
        scores.extend(scorer.score(window))
    return scores


def sentence_nll(sentence: str, scorer: MlmScorerClient) -> SentenceScore:
    """Mean negative log probability over all masked positions."""
    if not sentence.strip():
        raise EmptyText("cannot score empty text")
    scores = _score_windowed(sentence, scorer)
    if not scores:
        raise ZeroTokens(f"scorer returned no positions for {sentence!r}")
    total = sum(-s.logprob_true_token for s in scores)
    return SentenceScore(sentence=sentence, n_tokens=len(scores), nll=total / len(scores))


def message_quality(
    message: Message,
    scorer: MlmScorerClient,
    segmenter: Callable[[str], list[str]] = segment_sentences,
    aggregation: str = "mean",
) -> float:
    """Aggregate sentence NLLs into one message score.

    mean: token-count-weighted, equal to the whole-message token mean when
    sentences partition the tokens. max: most pessimistic sentence.
    """
    if not message.text.strip():
        raise EmptyText(f"message {message.id} has empty text")
    sentences = segmenter(message.text) or [message.text]
    scores: list[SentenceScore] = []
    failures: list[str] = []
    for sentence in sentences:
        try:
            scores.append(sentence_nll(sentence, scorer))
        except (TransportError, ZeroTokens) as e:
            failures.append(str(e))
    if not scores:
        raise ScoringFailed(message.id, "; ".join(failures) or "no sentences")
    if aggregation == "max":
        return max(s.nll for s in scores)
    if aggregation != "mean":
        raise ValueError(f"unknown aggregation {aggregation!r}")
    total_tokens = sum(s.n_tokens for s in scores)
    return sum(s.nll * s.n_tokens for s in scores) / total_tokens


@dataclass(frozen=True)
class QualityReport:
    histogram: HistogramSummary
    mean: float
    stddev: float
    n_scored: int
    n_failed: int
    failures: tuple[str, ...] = ()


def score_corpus(
    corpus: Corpus,
    scorer: MlmScorerClient,
    segmenter: Callable[[str], list[str]] = segment_sentences,
    aggregation: str = "mean",
    bins: int = 50,
    hist_range: tuple[float, float] = (0.0, 10.0),
) -> tuple[Corpus, QualityReport]:
    """Score every message; failures leave quality_nll unset and are listed
    in the report."""
    values: list[float] = []
    failures: list[str] = []
    convs = []
    for conv in corpus.conversations:
        msgs = []
        for m in conv.messages:
            try:
                nll = message_quality(m, scorer, segmenter, aggregation)
            except (EmptyText, ScoringFailed) as e:
                failures.append(f"{m.id}: {e}")
                msgs.append(m)
                continue
            values.append(nll)
            msgs.append(replace(m, quality_nll=nll))
        convs.append(replace(conv, messages=tuple(msgs)))
    summary = histogram(values, bins=bins, lo=hist_range[0], hi=hist_range[1])
    report = QualityReport(
        histogram=summary,
        mean=summary.mean,
        stddev=summary.stddev,
        n_scored=len(values),
        n_failed=len(failures),
        failures=tuple(failures),
    )
    return Corpus(tuple(convs), corpus.manifest), report


def filter_by_quality(
    corpus: Corpus,
    threshold: float = 2.0,
    broken_flow_policy: str = "drop_conversation",
    flow: Optional[FlowPattern] = None,
) -> tuple[Corpus, StageReport]:
    """Keep messages with quality_nll strictly below the threshold.

    Unscored messages are removed and counted separately (flagged_messages).
    Conversations whose alternation breaks after removal are dropped by
    default; keep_remainder keeps what survives (for ablations).
    """
    if broken_flow_policy not in ("drop_conversation", "keep_remainder"):
        raise ValueError(f"unknown broken_flow_policy {broken_flow_policy!r}")
    kept: list[Conversation] = []
    removed_convs = removed_msgs = unscored = 0
    for conv in corpus.conversations:
        surviving = []
        for m in conv.messages:
            if m.quality_nll is None:
                unscored += 1
                removed_msgs += 1
            elif m.quality_nll < threshold:
                surviving.append(m)
            else:
                removed_msgs += 1
        if not surviving:
            removed_convs += 1
            continue
        pruned = replace(conv, messages=tuple(surviving))
        if len(surviving) < len(conv.messages) and broken_flow_policy == "drop_conversation":
            # A damaged conversation survives only as complete alternating
            # exchange pairs; a question without its reply (or vice versa)
            # is worse training data than no sample.
            ns = pruned.non_system()
            check = flow if flow is not None else FlowPattern(
                expected_first_role_after_system=ns[0].role if ns else Role.HUMAN,
            )
            if len(ns) < 2 or len(ns) % 2 != 0 or not _flow_ok(pruned, check):
                removed_convs += 1
                removed_msgs += len(surviving)
                continue
        kept.append(pruned)
    report = StageReport(
        stage_name="filter_by_quality",
        input_conversations=len(corpus),
        removed_conversations=removed_convs,
        removed_messages=removed_msgs,
        flagged_messages=unscored,
        params_digest=params_digest({
            "threshold": threshold, "broken_flow_policy": broken_flow_policy,
        }),
    )
    return corpus.with_stage(kept, report), report

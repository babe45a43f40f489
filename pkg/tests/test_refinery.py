import random

import pytest

from corpusforge.language import StopwordDetector
from corpusforge.model import ContentClass, Corpus, Role
from corpusforge.refinery import (
    EnglishPolicy,
    FlowPattern,
    MissingHash,
    RefineConfig,
    annotate_language,
    apply_english_policy,
    dedup_conversations,
    drop_empty,
    ensure_hashes,
    run_refinement,
    strip_system_prompts,
    triage_text_vs_code,
    validate_flow,
)
from tests.conftest import ScriptedChatClient, conv, corpus

H, A, S = Role.HUMAN, Role.ASSISTANT, Role.SYSTEM


class TestDropEmpty:
    def test_all_empty_removed(self):
        c = corpus(
            conv("a", [(H, "ciao"), (A, "salve")]),
            conv("b", [(H, ""), (A, "")]),
            conv("c", [(H, "come va")]),
        )
        out, report = drop_empty(c)
        assert [x.id for x in out.conversations] == ["a", "c"]
        assert report.removed_conversations == 1

    def test_partially_empty_retained(self):
        c = corpus(conv("a", [(H, ""), (A, "non vuoto")]))
        out, report = drop_empty(c)
        assert len(out) == 1
        assert report.removed_conversations == 0

    def test_system_only_removed(self):
        c = corpus(conv("a", [(S, "prompt")]))
        out, _ = drop_empty(c)
        assert len(out) == 0


class TestValidateFlow:
    def test_alternating_retained(self):
        c = corpus(conv("a", [(S, "p"), (H, "1"), (A, "2"), (H, "3"), (A, "4")]))
        out, report = validate_flow(c, FlowPattern(H, True))
        assert len(out) == 1
        assert report.removed_conversations == 0

    def test_broken_alternation_removed(self):
        c = corpus(conv("a", [(H, "1"), (H, "2"), (A, "3")]))
        out, report = validate_flow(c, FlowPattern(H, True))
        assert len(out) == 0
        assert report.removed_conversations == 1

    def test_wrong_first_role_removed(self):
        c = corpus(conv("a", [(A, "1"), (H, "2")]))
        out, _ = validate_flow(c, FlowPattern(H, True))
        assert len(out) == 0

    def test_assistant_first_pattern(self):
        c = corpus(conv("a", [(A, "1"), (H, "2"), (A, "3")]))
        out, _ = validate_flow(c, FlowPattern(A, True))
        assert len(out) == 1

    def test_non_strict_checks_first_role_only(self):
        c = corpus(conv("a", [(H, "1"), (H, "2")]))
        out, _ = validate_flow(c, FlowPattern(H, strict_alternation=False))
        assert len(out) == 1

    def test_survivors_pass_recheck(self):
        pattern = FlowPattern(H, True)
        convs = [
            conv("a", [(H, "1"), (A, "2")]),
            conv("b", [(A, "1")]),
            conv("c", [(H, "1"), (A, "2"), (H, "3"), (A, "4")]),
        ]
        out, _ = validate_flow(corpus(*convs), pattern)
        again, report = validate_flow(out, pattern)
        assert report.removed_conversations == 0


def hashed(*convs):
    return ensure_hashes(corpus(*convs))


class TestDedup:
    def test_three_of_four_removed(self):
        c = hashed(
            conv("victim", [(H, "d1"), (A, "d2"), (H, "d3"), (A, "unico")]),
            conv("o1", [(H, "d1"), (A, "x1")]),
            conv("o2", [(H, "d2"), (A, "x2")]),
            conv("o3", [(H, "d3"), (A, "x3")]),
        )
        out, report = dedup_conversations(c)
        assert "victim" not in [x.id for x in out.conversations]
        assert report.removed_conversations == 1

    def test_exactly_half_retained(self):
        c = hashed(
            conv("boundary", [(H, "d1"), (A, "d2"), (H, "solo1"), (A, "solo2")]),
            conv("o1", [(H, "d1"), (A, "y1")]),
            conv("o2", [(H, "d2"), (A, "y2")]),
        )
        out, _ = dedup_conversations(c)
        assert "boundary" in [x.id for x in out.conversations]

    def test_repeats_within_same_conversation_dont_count(self):
        c = hashed(
            conv("a", [(H, "ciao"), (A, "ciao"), (H, "ciao"), (A, "ciao")]),
        )
        out, report = dedup_conversations(c)
        assert len(out) == 1
        assert report.removed_conversations == 0

    def test_system_messages_excluded_from_denominator(self):
        # 2 of 2 non-system duplicated: removed regardless of the shared
        # system prompt.
        c = hashed(
            conv("a", [(S, "stesso prompt"), (H, "d1"), (A, "d2")]),
            conv("b", [(S, "stesso prompt"), (H, "d1"), (A, "d2")]),
        )
        out, report = dedup_conversations(c)
        assert len(out) == 0

    def test_missing_hash_raises(self):
        c = corpus(conv("a", [(H, "senza hash")]))
        with pytest.raises(MissingHash):
            dedup_conversations(c)

    def test_verdicts_order_insensitive(self):
        convs = [
            conv("a", [(H, "d1"), (A, "d2")]),
            conv("b", [(H, "d1"), (A, "d2")]),
            conv("c", [(H, "x"), (A, "d1")]),
            conv("d", [(H, "solo"), (A, "unici")]),
        ]
        baseline, _ = dedup_conversations(hashed(*convs))
        survivors = {x.id for x in baseline.conversations}
        rng = random.Random(7)
        for _ in range(10):
            shuffled = convs[:]
            rng.shuffle(shuffled)
            out, _ = dedup_conversations(hashed(*shuffled))
            assert {x.id for x in out.conversations} == survivors

    def test_one_pass_no_cascade(self):
        # b duplicates only against a; removing a must not retro-remove b.
        c = hashed(
            conv("a", [(H, "d1"), (A, "d2"), (H, "d3"), (A, "d4")]),
            conv("b", [(H, "d1"), (A, "b2")]),
            conv("o1", [(H, "d2"), (A, "o1x")]),
            conv("o2", [(H, "d3"), (A, "o2x")]),
            conv("o3", [(H, "d4"), (A, "o3x")]),
        )
        out, _ = dedup_conversations(c)
        ids = {x.id for x in out.conversations}
        assert "a" not in ids
        assert "b" in ids


class TestStripSystem:
    def test_system_removed(self):
        c = corpus(conv("a", [(S, "p"), (H, "1"), (A, "2")]))
        out, report = strip_system_prompts(c)
        assert [m.role for m in out.conversations[0].messages] == [H, A]
        assert report.removed_messages == 1

    def test_system_only_conversation_dropped(self):
        c = corpus(conv("a", [(S, "p")]))
        out, report = strip_system_prompts(c)
        assert len(out) == 0
        assert report.removed_conversations == 1
        assert report.removed_messages == 1


class TestAnnotateLanguage:
    def test_english_flagged(self):
        c = corpus(conv("a", [
            (H, "The quick brown fox jumps over the lazy dog and the cat"),
        ]))
        out, report = annotate_language(c)
        tag = out.conversations[0].messages[0].detected_language
        assert tag.code == "en"
        assert report.flagged_messages == 1

    def test_italian_not_flagged(self):
        c = corpus(conv("a", [(H, "Buongiorno, come posso aiutarti oggi?")]))
        out, report = annotate_language(c)
        tag = out.conversations[0].messages[0].detected_language
        assert tag.code == "it"
        assert report.flagged_messages == 0

    def test_every_message_annotated(self):
        c = corpus(conv("a", [(S, "p"), (H, "ciao a tutti"), (A, "the cat sat")]))
        out, _ = annotate_language(c)
        assert all(m.detected_language is not None
                   for m in out.conversations[0].messages)

    def test_detector_deterministic(self):
        detector = StopwordDetector()
        text = "the cat è sul tavolo with il cane"
        assert detector.detect(text) == detector.detect(text)


def flagged_conv(cid, text):
    c = corpus(conv(cid, [(H, text), (A, "va bene così grazie")]))
    out, _ = annotate_language(c)
    return out


ENGLISH = "And the story was about how they would have been doing this and that"


class TestTriage:
    def test_code_reply(self):
        client = ScriptedChatClient(["CODE"])
        out, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client)
        assert out.conversations[0].messages[0].content_class is ContentClass.CODE

    def test_text_reply(self):
        client = ScriptedChatClient(["TEXT"])
        out, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client)
        assert out.conversations[0].messages[0].content_class is ContentClass.NATURAL_TEXT

    def test_case_insensitive_reply(self):
        client = ScriptedChatClient(["  code.  "])
        out, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client)
        assert out.conversations[0].messages[0].content_class is ContentClass.CODE

    def test_unparseable_retried_then_null(self):
        client = ScriptedChatClient(["boh", "mah", "non so", "ancora no"])
        out, report = triage_text_vs_code(flagged_conv("a", ENGLISH), client, max_retries=3)
        assert out.conversations[0].messages[0].content_class is None
        assert report.flagged_messages == 1
        assert client.calls == 4  # initial + 3 retries

    def test_retry_recovers(self):
        client = ScriptedChatClient(["???", "TEXT"])
        out, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client, max_retries=3)
        assert out.conversations[0].messages[0].content_class is ContentClass.NATURAL_TEXT

    def test_transport_error_does_not_abort_stage(self):
        # Script exhaustion raises TransportError on every call; the stage
        # must still complete with nulls.
        client = ScriptedChatClient([])
        out, report = triage_text_vs_code(flagged_conv("a", ENGLISH), client, max_retries=1)
        assert out.conversations[0].messages[0].content_class is None
        assert report.flagged_messages == 1

    def test_unflagged_messages_untouched(self):
        client = ScriptedChatClient(["TEXT"])
        out, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client)
        assert out.conversations[0].messages[1].content_class is None


def triaged(cid, policy):
    client = ScriptedChatClient(["TEXT"])
    c, _ = triage_text_vs_code(flagged_conv(cid, ENGLISH), client)
    return apply_english_policy(c, policy)


class TestEnglishPolicy:
    def test_flag_only_unchanged(self):
        out, report = triaged("a", EnglishPolicy.FLAG_ONLY)
        assert len(out.conversations[0].messages) == 2
        assert report.flagged_messages == 1
        assert report.removed_messages == 0

    def test_drop_message(self):
        out, report = triaged("a", EnglishPolicy.DROP_MESSAGE)
        assert len(out.conversations[0].messages) == 1
        assert report.removed_messages == 1

    def test_drop_conversation(self):
        out, report = triaged("a", EnglishPolicy.DROP_CONVERSATION)
        assert len(out) == 0
        assert report.removed_conversations == 1

    def test_code_not_dropped(self):
        client = ScriptedChatClient(["CODE"])
        c, _ = triage_text_vs_code(flagged_conv("a", ENGLISH), client)
        out, report = apply_english_policy(c, EnglishPolicy.DROP_MESSAGE)
        assert len(out.conversations[0].messages) == 2
        assert report.removed_messages == 0


def defect_fixture():
    """Ten conversations, one defect per category."""
    return corpus(
        conv("ok1", [(S, "prompt a"), (H, "domanda uno"), (A, "risposta uno")]),
        conv("ok2", [(S, "prompt b"), (H, "domanda due"), (A, "risposta due")]),
        conv("ok3", [(H, "domanda tre"), (A, "risposta tre")]),
        conv("empty", [(H, ""), (A, "")]),
        conv("badflow", [(H, "uno"), (H, "due")]),
        conv("dup", [(H, "domanda uno"), (A, "risposta uno")]),
        conv("sysonly", [(S, "solo prompt")]),
        conv("ok4", [(H, "domanda quattro"), (A, "risposta quattro")]),
        conv("ok5", [(H, "domanda cinque"), (A, "risposta cinque")]),
        conv("ok6", [(H, "domanda sei"), (A, "risposta sei")]),
    )


class TestRunRefinement:
    def test_stage_reports_match_expectation(self):
        refined = run_refinement(defect_fixture())
        by_name = {r.stage_name: r for r in refined.manifest}
        assert by_name["drop_empty"].removed_conversations == 2  # empty, sysonly
        assert by_name["validate_flow"].removed_conversations == 1  # badflow
        assert by_name["dedup_conversations"].removed_conversations == 2  # ok1, dup
        assert by_name["strip_system_prompts"].removed_messages == 1  # ok2's prompt
        survivors = {c.id for c in refined.conversations}
        assert survivors == {"ok2", "ok3", "ok4", "ok5", "ok6"}

    def test_manifest_counts_chain(self):
        refined = run_refinement(defect_fixture())
        reports = refined.manifest
        for prev, cur in zip(reports, reports[1:]):
            assert cur.input_conversations == prev.input_conversations - prev.removed_conversations

    def test_idempotent(self):
        once = run_refinement(defect_fixture())
        twice = run_refinement(Corpus(once.conversations))
        assert twice.conversations == once.conversations
        assert all(r.removed_conversations == 0 and r.removed_messages == 0
                   for r in twice.manifest)

    def test_clean_corpus_untouched(self):
        clean = corpus(
            conv("a", [(H, "uno"), (A, "due")]),
            conv("b", [(H, "tre"), (A, "quattro")]),
        )
        refined = run_refinement(clean)
        assert all(r.removed_conversations == 0 for r in refined.manifest)

    def test_monotone(self):
        original = defect_fixture()
        refined = run_refinement(original)
        assert len(refined) <= len(original)
        assert sum(len(c.messages) for c in refined.conversations) <= \
            sum(len(c.messages) for c in original.conversations)

    def test_survivors_pass_flow(self):
        config = RefineConfig()
        refined = run_refinement(defect_fixture(), config)
        out, report = validate_flow(refined, config.flow)
        assert report.removed_conversations == 0

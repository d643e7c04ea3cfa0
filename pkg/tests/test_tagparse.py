import random

import pytest

from spanact.errors import UsageError
from spanact.scheme import Annotation, TagSpan
from spanact.tagparse import (
    ACT,
    NO_ACT,
    UNPARSEABLE,
    ParseFailure,
    ParsedOutput,
    align,
    extract_payload,
    no_act_sentence,
    parse_tags,
    process_response,
    render_tagged_text,
    to_annotation,
)

from conftest import make_instance, random_annotation, random_instance


# --- payload extraction -----------------------------------------------------


def test_extract_payload_plain_marker():
    verdict, payload = extract_payload(
        "The annotated version is: <APOLOGISING> sorry </APOLOGISING> there"
    )
    assert verdict == ACT
    assert payload == "<APOLOGISING> sorry </APOLOGISING> there"


def test_extract_payload_marker_variants():
    for lead in (
        "Annotated version: X",
        "The annotated version: X",
        "the Annotated Version is : X",
    ):
        verdict, payload = extract_payload(lead)
        assert verdict == ACT
        assert payload == "X"


def test_extract_payload_takes_last_marker():
    text = (
        "The annotated version is: wrong attempt\n"
        "Wait, let me redo that.\n"
        "The annotated version is: right answer"
    )
    assert extract_payload(text) == (ACT, "right answer")


def test_extract_payload_stops_at_blank_line():
    text = "The annotated version is: the answer here\n\nHope this helps!"
    assert extract_payload(text) == (ACT, "the answer here")


def test_extract_payload_strips_wrapping_quotes():
    text = 'The annotated version is: "quoted <A> x </A> answer"'
    assert extract_payload(text) == (ACT, "quoted <A> x </A> answer")


def test_extract_payload_no_act_beats_marker():
    text = (
        'No speech act of apology is present in the utterance "x sorry y".\n'
        "The annotated version is: anything"
    )
    assert extract_payload(text) == (NO_ACT, "")


def test_extract_payload_no_act_custom_act_name():
    text = "No speech act of gratitude is present here."
    assert extract_payload(text, act_name="gratitude") == (NO_ACT, "")
    assert extract_payload(text, act_name="apology")[0] == UNPARSEABLE


def test_extract_payload_fallback_tagged_line():
    text = (
        "Sure! Let me help.\n"
        "oh <APOLOGISING> sorry </APOLOGISING> about that\n"
        "Is there anything else?"
    )
    verdict, payload = extract_payload(text)
    assert verdict == ACT
    assert payload == "oh <APOLOGISING> sorry </APOLOGISING> about that"


def test_extract_payload_unparseable():
    verdict, payload = extract_payload("I had a lovely chat about camping.")
    assert verdict == UNPARSEABLE
    assert payload == ""


# --- tag parsing ------------------------------------------------------------


def test_parse_tags_spaced_and_fused(scheme):
    spaced = "oh <APOLOGISING> sorry </APOLOGISING> <REASON> about that </REASON>"
    fused = "oh <APOLOGISING>sorry</APOLOGISING> <REASON>about that</REASON>"
    for text in (spaced, fused):
        parsed = parse_tags(text, scheme)
        assert parsed.verdict == ACT
        assert parsed.output_tokens == ("oh", "sorry", "about", "that")
        assert parsed.raw_spans == (
            TagSpan("APOLOGISING", 1, 2),
            TagSpan("REASON", 2, 4),
        )


def test_parse_tags_failure_modes(scheme):
    cases = {
        "<WHATNOW> sorry </WHATNOW>": "unknown tag",
        "<APOLOGISING> sorry": "unbalanced",
        "sorry </APOLOGISING>": "unbalanced",
        "<APOLOGISING> <REASON> x </REASON> sorry </APOLOGISING>": "nested",
        "<APOLOGISING> </APOLOGISING> sorry": "empty",
        "no tags at all": "no tag",
    }
    for text, hint in cases.items():
        result = parse_tags(text, scheme)
        assert result.verdict == UNPARSEABLE, text
        assert result.diagnostics, text


# --- alignment --------------------------------------------------------------


def test_align_identity():
    tokens = ["oh", "sorry", "about", "that"]
    result = align(tokens, tokens)
    assert result.coverage == 1.0
    assert result.mapping == tuple((i, i + 1) for i in range(4))


def test_align_case_and_punct_tolerance():
    out = ["Oh", "sorry,", "about", "that."]
    src = ["oh", "sorry", "about", "that"]
    result = align(out, src)
    assert result.coverage == 1.0
    assert result.mapping == tuple((i, i + 1) for i in range(4))


def test_align_clitic_fusion():
    out = ["I'm", "sorry"]
    src = ["I", "'m", "sorry"]
    result = align(out, src)
    assert result.mapping == ((0, 2), (2, 3))
    assert result.coverage == 1.0


def test_align_dropped_and_invented_tokens():
    src = ["a", "b", "c", "d", "e"]
    out = ["a", "x", "c", "e"]
    result = align(out, src)
    assert result.mapping[0] == (0, 1)
    assert result.mapping[2] == (2, 3)
    assert result.mapping[3] == (4, 5)
    assert result.mapping[1] is None
    assert result.coverage == pytest.approx(3 / 5)


def test_align_empty_output_rejected():
    with pytest.raises(UsageError):
        align([], ["a", "b"])


# --- projection to annotations ----------------------------------------------


def test_to_annotation_projects_spans(scheme):
    inst = make_instance(["oh", "sorry", "about", "that"], instance_id="t:0")
    parsed = parse_tags(
        "oh <APOLOGISING>sorry</APOLOGISING> <REASON>about that</REASON>", scheme
    )
    alignment = align(parsed.output_tokens, inst.tokens)
    ann = to_annotation(parsed, alignment, inst, scheme, provenance="llm-run:r1")
    assert isinstance(ann, Annotation)
    assert ann.spans == (TagSpan("APOLOGISING", 1, 2), TagSpan("REASON", 2, 4))
    assert ann.provenance == "llm-run:r1"


def test_to_annotation_low_coverage_fails(scheme):
    inst = make_instance(
        ["w0", "w1", "w2", "w3", "w4", "w5", "sorry", "w7", "w8", "w9"],
        instance_id="t:0",
    )
    parsed = parse_tags("<APOLOGISING>sorry</APOLOGISING>", scheme)
    alignment = align(parsed.output_tokens, inst.tokens)
    result = to_annotation(parsed, alignment, inst, scheme)
    assert isinstance(result, ParseFailure)
    assert result.reason == "low-coverage"
    relaxed = to_annotation(parsed, alignment, inst, scheme, min_coverage=0.05)
    assert isinstance(relaxed, Annotation)
    assert relaxed.spans == (TagSpan("APOLOGISING", 6, 7),)


def test_to_annotation_drops_unmapped_spans_into_warnings(scheme):
    inst = make_instance(["oh", "sorry", "about", "that"], instance_id="t:0")
    parsed = parse_tags(
        "oh <APOLOGISING>sorry</APOLOGISING> <REASON>invented words</REASON> about that",
        scheme,
    )
    alignment = align(parsed.output_tokens, inst.tokens)
    sink: list = []
    ann = to_annotation(parsed, alignment, inst, scheme, min_coverage=0.5, warnings=sink)
    assert isinstance(ann, Annotation)
    assert ann.spans == (TagSpan("APOLOGISING", 1, 2),)
    assert sink and "REASON" in sink[0]


def test_to_annotation_overlapping_projection_fails(scheme):
    # align() produces monotonic mappings, but to_annotation accepts any
    # alignment; a crossing mapping must be caught, not silently emitted.
    from spanact.tagparse import AlignmentResult

    inst = make_instance(["sorry", "x", "y"], instance_id="t:0")
    parsed = parse_tags(
        "<APOLOGISING>sorry</APOLOGISING> <REASON>x</REASON> <APOLOGISEE>y</APOLOGISEE>",
        scheme,
    )
    assert parsed.verdict == ACT
    crossing = AlignmentResult(mapping=((0, 1), (1, 3), (1, 2)), coverage=1.0)
    result = to_annotation(parsed, crossing, inst, scheme)
    assert isinstance(result, ParseFailure)
    assert result.reason == "overlapping-projection"


def test_no_act_annotation(scheme):
    inst = make_instance(["felt", "sorry", "for", "him"], instance_id="t:0")
    outcome = process_response(no_act_sentence("apology", inst.text), inst, scheme)
    assert outcome.failure is None
    assert outcome.annotation == Annotation("t:0", False, (), "gold")


def test_process_response_full_pipeline(scheme):
    inst = make_instance(["oh", "sorry", "about", "that"], instance_id="t:0")
    text = 'The annotated version is: "oh <APOLOGISING> sorry </APOLOGISING> <REASON> about that </REASON>"'
    outcome = process_response(text, inst, scheme, provenance="llm-run:x")
    assert outcome.instance_id == "t:0"
    assert outcome.failure is None
    assert outcome.coverage == 1.0
    assert outcome.annotation.spans == (
        TagSpan("APOLOGISING", 1, 2),
        TagSpan("REASON", 2, 4),
    )


def test_process_response_unparseable(scheme):
    inst = make_instance(["oh", "sorry"], instance_id="t:0")
    outcome = process_response("lovely weather today", inst, scheme)
    assert outcome.annotation is None
    assert outcome.failure is not None
    assert outcome.failure.reason == "no-answer-pattern"


# --- rendering and round trips ----------------------------------------------


def test_render_tagged_text(scheme):
    inst = make_instance(["oh", "sorry", "about", "that"], instance_id="t:0")
    ann = Annotation(
        "t:0", True, (TagSpan("APOLOGISING", 1, 2), TagSpan("REASON", 2, 4)), "gold"
    )
    assert (
        render_tagged_text(ann, inst, scheme)
        == "oh <APOLOGISING> sorry </APOLOGISING> <REASON> about that </REASON>"
    )


def test_render_tagged_text_checks_id(scheme):
    inst = make_instance(["oh", "sorry"], instance_id="t:0")
    ann = Annotation("other:1", False, (), "gold")
    with pytest.raises(UsageError):
        render_tagged_text(ann, inst, scheme)


def test_round_trip_random_annotations(scheme):
    rng = random.Random(813)
    for trial in range(150):
        inst = random_instance(rng, instance_id=f"t:{trial}")
        ann = random_annotation(rng, inst, scheme, act_present=rng.random() < 0.8)
        text = render_tagged_text(ann, inst, scheme)
        if ann.act_present:
            text = f"The annotated version is: {text}"
        outcome = process_response(text, inst, scheme)
        assert outcome.failure is None, (inst.tokens, ann, outcome.failure)
        assert outcome.annotation == ann

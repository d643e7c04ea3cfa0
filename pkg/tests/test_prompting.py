import dataclasses

import pytest

from spanact.errors import DataError
from spanact.prompting import (
    Exemplar,
    PromptSpec,
    build_prompt,
    default_prompt_spec,
    lint_prompt,
    load_prompt_spec,
    prompt_hash,
    render_exemplar,
    render_question,
    save_prompt_spec,
)
from spanact.scheme import AnnotationScheme, TagDef

from conftest import make_instance


def codes(findings):
    return {f.code for f in findings}


def by_code(findings, code):
    return [f for f in findings if f.code == code]


def test_default_spec_text(prompt_spec):
    assert prompt_spec.preamble == "Please learn the following contents."
    assert prompt_spec.examples_header == "Here are some examples:"
    assert prompt_spec.continuation_header == "Here are some other examples:"
    assert prompt_spec.question_label == "Question:"
    assert prompt_spec.answer_label == "Answer:"
    assert prompt_spec.part_budget == 1700
    assert len(prompt_spec.exemplars) == 10
    assert "{UTTERANCE}" in prompt_spec.question_template
    assert prompt_spec.question_template.startswith("Can you detect the speech act")
    assert prompt_spec.blocklist == ()


def test_exemplar_ranks_contiguous(prompt_spec):
    assert [e.rank for e in prompt_spec.exemplars] == list(range(1, 11))


def test_render_exemplar(prompt_spec):
    block = render_exemplar(prompt_spec, prompt_spec.exemplars[0])
    assert block.startswith('Question: Can you annotate the speech act of apology in the utterance "Ah,')
    assert "\nAnswer: The annotated version is:" in block


def test_build_prompt_splits_in_two(scheme, prompt_spec):
    parts = build_prompt(scheme, prompt_spec)
    assert len(parts) == 2
    assert all(len(p) <= prompt_spec.part_budget for p in parts)
    assert parts[0].startswith(prompt_spec.preamble)
    assert prompt_spec.examples_header in parts[0]
    assert parts[1].startswith(prompt_spec.continuation_header)
    assert parts[0].count("Question:") == 4
    assert parts[1].count("Question:") == 6


def test_build_prompt_single_part_when_budget_allows(scheme, prompt_spec):
    spec = dataclasses.replace(prompt_spec, part_budget=10_000)
    parts = build_prompt(scheme, spec)
    assert len(parts) == 1
    assert spec.continuation_header not in parts[0]


def test_build_prompt_rejects_unfittable_exemplar(scheme, prompt_spec):
    spec = dataclasses.replace(prompt_spec, part_budget=120)
    with pytest.raises(DataError):
        build_prompt(scheme, spec)


def test_render_question_quotes_instance(prompt_spec):
    inst = make_instance(["oh", "sorry", "about", "that"])
    q = render_question(prompt_spec, inst)
    assert q.endswith('"oh sorry about that"')
    assert q.startswith("Can you detect the speech act of apology")
    assert "APOLOGISING, REASON, APOLOGISER, APOLOGISEE, or INTENSIFIER" in q


def test_render_question_accepts_plain_token_sequence(prompt_spec):
    q = render_question(prompt_spec, ["twenty", "one", "tokens", "sorry"])
    assert q.endswith('"twenty one tokens sorry"')


def test_default_lint_baseline(scheme, prompt_spec):
    findings = lint_prompt(prompt_spec, scheme)
    assert codes(findings) == {"opaque-tag-label"}
    flagged = {f.location for f in findings}
    assert flagged == {"tag:APOLOGISER", "tag:APOLOGISEE", "tag:INTENSIFIER"}
    assert all(f.severity == "warning" for f in findings)
    assert all(f.factor == 7 for f in findings)


def test_lint_qa_layout_missing(scheme, prompt_spec):
    spec = dataclasses.replace(prompt_spec, question_label="", answer_label="")
    findings = by_code(lint_prompt(spec, scheme), "qa-layout-missing")
    assert findings and findings[0].factor == 1


def test_lint_ungrammatical_exemplar(scheme, prompt_spec):
    exemplars = list(prompt_spec.exemplars)
    exemplars[7] = dataclasses.replace(exemplars[7], ungrammatical=True)
    spec = dataclasses.replace(prompt_spec, exemplars=tuple(exemplars))
    findings = by_code(lint_prompt(spec, scheme), "ungrammatical-exemplar")
    assert len(findings) == 1
    assert findings[0].factor == 2
    assert "exemplar[8]" == findings[0].location


def test_lint_vague_task_phrasing(scheme, prompt_spec):
    spec = dataclasses.replace(
        prompt_spec,
        question_template="Can you annotate the following utterance?\n\n{UTTERANCE}",
    )
    flagged = codes(lint_prompt(spec, scheme))
    assert "vague-task-phrasing" in flagged
    assert "tags-not-enumerated" in flagged


def test_lint_tags_not_enumerated_is_word_boundary_aware(scheme, prompt_spec):
    # REASON appears only inside REASONS: not a mention of the tag.
    template = (
        "Can you detect the speech act of apology and annotate REASONS plus "
        "APOLOGISING, APOLOGISER, APOLOGISEE, INTENSIFIER in the following "
        "utterance?\n\n{UTTERANCE}"
    )
    spec = dataclasses.replace(prompt_spec, question_template=template)
    findings = by_code(lint_prompt(spec, scheme), "tags-not-enumerated")
    assert len(findings) == 1
    assert "REASON" in findings[0].message


def test_lint_over_budget_is_error(scheme, prompt_spec):
    big = "x" * 2000
    exemplars = list(prompt_spec.exemplars)
    exemplars[0] = dataclasses.replace(exemplars[0], response=big)
    spec = dataclasses.replace(prompt_spec, exemplars=tuple(exemplars))
    findings = by_code(lint_prompt(spec, scheme), "exemplar-over-budget")
    assert findings and findings[0].severity == "error"


def test_lint_head_over_budget(scheme, prompt_spec):
    spec = dataclasses.replace(prompt_spec, preamble="p" * 2000)
    findings = by_code(lint_prompt(spec, scheme), "head-over-budget")
    assert findings and findings[0].severity == "error"


def test_lint_open_class_tag_late(scheme, prompt_spec):
    # Keep only exemplars without INTENSIFIER in part one by pushing the two
    # INTENSIFIER exemplars (ranks 1 and 8) to the end.
    exemplars = sorted(
        prompt_spec.exemplars,
        key=lambda e: ("INTENSIFIER" in e.response, e.rank),
    )
    exemplars = tuple(
        dataclasses.replace(e, rank=i + 1) for i, e in enumerate(exemplars)
    )
    spec = dataclasses.replace(prompt_spec, exemplars=exemplars)
    findings = by_code(lint_prompt(spec, scheme), "open-class-tag-late")
    assert findings
    assert any("INTENSIFIER" in f.message for f in findings)
    assert all(f.factor == 6 for f in findings)


def test_lint_opaque_tag_label_specification_variant(scheme, prompt_spec):
    relabeled = AnnotationScheme(
        act_name=scheme.act_name,
        marker_lexemes=scheme.marker_lexemes,
        tags=tuple(
            TagDef("SPECIFICATION", t.definition, t.open_class) if t.name == "REASON" else t
            for t in scheme.tags
        ),
        no_act_label=scheme.no_act_label,
    )
    findings = by_code(lint_prompt(prompt_spec, relabeled), "opaque-tag-label")
    assert any(f.location == "tag:SPECIFICATION" for f in findings)


def test_lint_blocklisted_word(scheme, prompt_spec):
    spec = dataclasses.replace(prompt_spec, blocklist=("bother",))
    findings = by_code(lint_prompt(spec, scheme), "blocklisted-word")
    assert findings and findings[0].severity == "error"
    assert findings[0].factor == 8


def test_spec_round_trip_and_hash(tmp_path, prompt_spec):
    path = tmp_path / "spec.json"
    save_prompt_spec(prompt_spec, path)
    loaded = load_prompt_spec(path)
    assert loaded == prompt_spec
    assert prompt_hash(loaded) == prompt_hash(prompt_spec)
    changed = dataclasses.replace(prompt_spec, preamble="Learn this.")
    assert prompt_hash(changed) != prompt_hash(prompt_spec)


def test_bundled_spec_matches_code(prompt_spec):
    from importlib import resources
    import json

    bundled = json.loads(
        resources.files("spanact").joinpath("data/apology_prompt.json").read_text("utf-8")
    )
    assert PromptSpec.from_dict(bundled) == prompt_spec


def test_spec_invariants(prompt_spec):
    with pytest.raises(DataError):
        dataclasses.replace(prompt_spec, part_budget=0)
    with pytest.raises(DataError):
        dataclasses.replace(prompt_spec, question_template="no placeholder")
    exemplars = prompt_spec.exemplars[:1] + prompt_spec.exemplars[:1]
    with pytest.raises(DataError):
        dataclasses.replace(prompt_spec, exemplars=exemplars)


def test_exemplar_invariants():
    with pytest.raises(DataError):
        Exemplar(utterance="", response="r", rank=1)
    with pytest.raises(DataError):
        Exemplar(utterance="u", response="r", rank=1, criteria=("novel",))

"""Acceptance gate for the toolkit's behavioral guarantees.

Each test checks one guarantee end to end at its stated tolerance and
prints a single PASS/FAIL line (bypassing pytest capture) so a full run
shows every verdict at a glance. Oracles are frozen literals: reference
metric values, hand-read span expectations for the bundled exemplar
answers, and byte-level fixture comparisons.
"""

import functools
import random
import time
from pathlib import Path

from spanact.cli import main as cli_main
from spanact.corpus import read_instances
from spanact.evaluate import (
    Cell,
    aggregate,
    cell_metrics,
    evaluate_pairs,
    load_annotations,
    pair_annotations,
    render_report,
)
from spanact.gateway import BackendConfig, make_backend, run_batch
from spanact.prompting import build_prompt, lint_prompt, render_question
from spanact.runstore import build_predictions
from spanact.scheme import AnnotationScheme, TagDef
from spanact.tagparse import (
    ACT,
    align,
    extract_payload,
    parse_tags,
    process_response,
    render_tagged_text,
)

from conftest import emit_verdict, make_instance, random_annotation, random_instance

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
DATA = Path(__file__).resolve().parent / "data"


def criterion(label):
    """Emit one PASS/FAIL line per guarantee, visible through capture."""

    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                emit_verdict(f"\nFAIL: {label}")
                raise
            emit_verdict(f"\nPASS: {label}")
            return result

        return wrapper

    return decorate


# 1. Frozen confusion counts must reproduce the reference per-tag percentages.

REFERENCE_ROWS = {
    # category: (counts, (precision%, recall%, F1%))
    "NO-ACT": (Cell(tp=70, fp=0, fn=28), (100.00, 71.43, 83.33)),
    "APOLOGISING": (Cell(tp=1109, fp=0, fn=1), (100.00, 99.91, 99.95)),
    "REASON": (Cell(tp=108, fp=6, fn=13), (94.74, 89.26, 91.91)),
    "APOLOGISER": (Cell(tp=164, fp=16, fn=0), (91.11, 100.00, 95.35)),
    "APOLOGISEE": (Cell(tp=35, fp=1, fn=7), (97.22, 83.33, 89.74)),
    "INTENSIFIER": (Cell(tp=41, fp=0, fn=3), (100.00, 93.18, 96.47)),
}
TOLERANCE_PP = 0.01


@criterion("per-tag P/R/F1 from frozen confusion counts match the reference values within 0.01pp")
def test_metric_oracle_per_tag():
    for category, (cell, expected) in REFERENCE_ROWS.items():
        m = cell_metrics(cell)
        for got, want, name in (
            (m.precision, expected[0], "precision"),
            (m.recall, expected[1], "recall"),
            (m.f1, expected[2], "f1"),
        ):
            assert got is not None, (category, name)
            assert abs(got * 100.0 - want) <= TOLERANCE_PP + 1e-9, (
                category,
                name,
                got * 100.0,
                want,
            )


# 2. The demo replay run must score exactly 42/50 = 84.00% instance accuracy.


@criterion("demo replay run reports instance accuracy 84.00% (42/50) exactly")
def test_instance_accuracy_oracle(scheme, prompt_spec):
    instances = read_instances(FIXTURES / "demo_instances.jsonl")
    config = BackendConfig.from_file(FIXTURES / "replay_backend.json")
    backend = make_backend(config)
    parts = build_prompt(scheme, prompt_spec)
    results, summary = run_batch(backend, parts, prompt_spec, instances, config=config)
    assert summary.status_counts == {"OK": 50}
    records = build_predictions(results, instances, scheme, run_id="acceptance")
    assert all(r.status == "OK" for r in records)
    gold = load_annotations(FIXTURES / "demo_gold.jsonl")
    predictions = [r.annotation for r in records]
    report = evaluate_pairs(pair_annotations(gold, predictions), tag_order=scheme.tag_names())
    assert report.n_instances == 50
    assert report.n_correct == 42
    assert report.instance_accuracy == 42 / 50
    rendered = render_report(report, no_act_label=scheme.no_act_label)
    assert "84.00" in rendered.splitlines()[0]


# 3. Every bundled exemplar answer, plus a held-out answer, must parse to
# hand-read verdicts and span sets. Expectations are frozen from a manual
# reading of each tagged answer against its whitespace-split utterance.

EXEMPLAR_EXPECTATIONS = {
    1: (True, [("APOLOGISER", 1, 2), ("INTENSIFIER", 3, 4), ("APOLOGISING", 4, 5), ("REASON", 5, 8)]),
    2: (True, [("APOLOGISING", 0, 1), ("REASON", 1, 3)]),
    3: (True, [("APOLOGISEE", 1, 3), ("APOLOGISER", 3, 4), ("APOLOGISING", 5, 6), ("REASON", 6, 9)]),
    4: (True, [("APOLOGISING", 0, 1), ("APOLOGISING", 1, 2), ("APOLOGISEE", 2, 4), ("REASON", 4, 10)]),
    5: (False, []),
    6: (False, []),
    7: (True, [("APOLOGISER", 0, 1), ("APOLOGISING", 2, 3), ("REASON", 3, 8)]),
    9: (True, [("APOLOGISING", 1, 2), ("APOLOGISEE", 2, 3)]),
    10: (True, [("APOLOGISING", 1, 2), ("APOLOGISEE", 2, 3)]),
}
# Rank 8's utterance exceeds the instance window cap, so it is checked at
# the parse/align level alongside the held-out answer below.
RANK8_EXPECTED = [
    ("APOLOGISER", 13, 14),
    ("INTENSIFIER", 15, 16),
    ("APOLOGISING", 16, 17),
    ("REASON", 17, 24),
]
HELD_OUT_UTTERANCE = (
    "I'm so excited oh look at these thank you yeah sorry they 're a bit wet "
    "yeah I like camping that"
)
HELD_OUT_ANSWER = (
    'The annotated version is: "I\'m so excited oh look at these thank you yeah '
    "<APOLOGISING>sorry</APOLOGISING> <REASON>they 're a bit wet</REASON> "
    'yeah I like camping that"'
)
HELD_OUT_EXPECTED = [("APOLOGISING", 10, 11), ("REASON", 11, 16)]


def project_spans(parsed, utterance_tokens):
    """Mirror the span projection for utterances too long for an instance."""
    alignment = align(parsed.output_tokens, utterance_tokens)
    assert alignment.coverage == 1.0
    projected = []
    for span in parsed.raw_spans:
        ranges = [alignment.mapping[i] for i in range(span.start, span.end)]
        ranges = [r for r in ranges if r is not None]
        projected.append((span.tag, min(r[0] for r in ranges), max(r[1] for r in ranges)))
    return sorted(projected, key=lambda s: (s[1], s[2]))


@criterion("all bundled exemplar answers and the held-out answer parse to the expected spans")
def test_parser_fixtures(scheme, prompt_spec):
    by_rank = {e.rank: e for e in prompt_spec.exemplars}
    for rank, (act_expected, spans_expected) in EXEMPLAR_EXPECTATIONS.items():
        exemplar = by_rank[rank]
        instance = make_instance(exemplar.utterance.split(), instance_id=f"ex:{rank}")
        outcome = process_response(exemplar.response, instance, scheme)
        assert outcome.failure is None, (rank, outcome.failure)
        annotation = outcome.annotation
        assert annotation.act_present is act_expected, rank
        got = [(s.tag, s.start, s.end) for s in annotation.spans]
        assert got == spans_expected, (rank, got)

    for utterance, response, expected in (
        (by_rank[8].utterance, by_rank[8].response, RANK8_EXPECTED),
        (HELD_OUT_UTTERANCE, HELD_OUT_ANSWER, HELD_OUT_EXPECTED),
    ):
        verdict, payload = extract_payload(response, act_name=scheme.act_name)
        assert verdict == ACT
        parsed = parse_tags(payload, scheme)
        assert parsed.verdict == ACT
        got = project_spans(parsed, utterance.split())
        assert got == expected, got


# 4. The shipped gold fixture must round-trip exactly through the text pipeline.


@criterion("shipped gold fixture round-trips exactly through render -> parse -> align (< 1 s)")
def test_gold_round_trip(scheme):
    instances = {i.id: i for i in read_instances(FIXTURES / "demo_instances.jsonl")}
    gold = load_annotations(FIXTURES / "demo_gold.jsonl")
    ifid = scheme.ifid_tag.name
    assert len(gold) >= 50
    assert sum(1 for g in gold if sum(s.tag == ifid for s in g.spans) > 1) >= 2
    assert sum(1 for g in gold if sum(s.tag == "REASON" for s in g.spans) > 1) >= 1
    assert sum(1 for g in gold if not g.act_present) >= 1
    started = time.perf_counter()
    for g in gold:
        instance = instances[g.instance_id]
        text = render_tagged_text(g, instance, scheme)
        response = text if not g.act_present else f"The annotated version is: {text}"
        outcome = process_response(response, instance, scheme, provenance=g.provenance)
        assert outcome.annotation == g, (g.instance_id, outcome.failure, outcome.annotation)
    elapsed = time.perf_counter() - started
    assert elapsed < 1.0, elapsed


# 5. aggregate must agree with an independent brute-force scorer.


def brute_force(pairs):
    """Set-intersection scorer written independently of the evaluator."""
    per_tag: dict[str, list[int]] = {}
    no_act = [0, 0, 0]  # tp, fp, fn
    for gold, pred in pairs:
        if not gold.act_present:
            if pred.act_present:
                no_act[2] += 1
            else:
                no_act[0] += 1
            continue
        if not pred.act_present:
            no_act[1] += 1
        gold_sets: dict[str, set] = {}
        pred_sets: dict[str, set] = {}
        for s in gold.spans:
            gold_sets.setdefault(s.tag, set()).add((s.start, s.end))
        if pred.act_present:
            for s in pred.spans:
                pred_sets.setdefault(s.tag, set()).add((s.start, s.end))
        for tag in set(gold_sets) | set(pred_sets):
            row = per_tag.setdefault(tag, [0, 0, 0])
            g, p = gold_sets.get(tag, set()), pred_sets.get(tag, set())
            row[0] += len(g & p)
            row[1] += len(p - g)
            row[2] += len(g - p)
    return per_tag, no_act


def small_random_pairs(rng, scheme, count, act_rate=0.8, max_spans=6):
    pairs = []
    for i in range(count):
        instance = random_instance(rng, instance_id=f"agg:{i}", n_min=6, n_max=12)
        annotations = []
        for _ in range(2):
            while True:
                candidate = random_annotation(
                    rng, instance, scheme, act_present=rng.random() < act_rate
                )
                if len(candidate.spans) <= max_spans:
                    annotations.append(candidate)
                    break
        pairs.append(tuple(annotations))
    return pairs


@criterion("aggregate matches an independent brute-force scorer on 200 random instances (< 10 s)")
def test_aggregation_matches_brute_force(scheme):
    rng = random.Random(20260813)
    started = time.perf_counter()
    pairs = small_random_pairs(rng, scheme, 200)
    assert max(len(g.spans) for g, _ in pairs) <= 6
    counts = aggregate(pairs)
    expected_tags, expected_no_act = brute_force(pairs)
    for tag, (tp, fp, fn) in expected_tags.items():
        cell = counts.per_tag[tag]
        assert (cell.tp, cell.fp, cell.fn) == (tp, fp, fn), tag
    for tag, cell in counts.per_tag.items():
        if tag not in expected_tags:
            assert (cell.tp, cell.fp, cell.fn) == (0, 0, 0), tag
    assert [counts.no_act.tp, counts.no_act.fn, counts.no_act.fp] == [
        expected_no_act[0],
        expected_no_act[2],
        expected_no_act[1],
    ]
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, elapsed


# 6. Correctly predicted no-act instances must not move any per-tag count.


@criterion("correct no-act pairs change no per-tag count (exclusion rule, exact)")
def test_no_act_exclusion(scheme):
    rng = random.Random(5150)
    pairs = small_random_pairs(rng, scheme, 40, act_rate=1.0)
    base = aggregate(pairs)
    padded = pairs + [
        (
            random_annotation(rng, random_instance(rng, instance_id=f"pad:{i}"), scheme, act_present=False),
            random_annotation(rng, random_instance(rng, instance_id=f"pad:{i}"), scheme, act_present=False),
        )
        for i in range(25)
    ]
    more = aggregate(padded)
    assert more.per_tag == base.per_tag
    assert more.no_act.tp == base.no_act.tp + 25
    assert more.no_act.fp == base.no_act.fp
    assert more.no_act.fn == base.no_act.fn


# 7. The replay pipeline must be byte-deterministic end to end.


@criterion("extract -> annotate -> eval on the replay fixture is byte-deterministic (< 5 s)")
def test_replay_pipeline_deterministic(tmp_path, capsys):
    started = time.perf_counter()
    artifacts = []
    for attempt in (1, 2):
        workdir = tmp_path / f"pass{attempt}"
        workdir.mkdir()
        inst_path = workdir / "instances.jsonl"
        rc = cli_main(
            ["extract", str(FIXTURES / "demo_corpus.txt"), "--source-id", "demo", "-o", str(inst_path)]
        )
        assert rc == 0
        assert inst_path.read_bytes() == (FIXTURES / "demo_instances.jsonl").read_bytes()
        store = workdir / "runs"
        rc = cli_main(
            [
                "annotate",
                "--instances", str(inst_path),
                "--backend", str(FIXTURES / "replay_backend.json"),
                "--run-store", str(store),
                "--run-id", "det",
            ]
        )
        assert rc == 0
        report_path = workdir / "report.txt"
        rc = cli_main(
            [
                "eval",
                "--gold", str(FIXTURES / "demo_gold.jsonl"),
                "--pred", str(store / "det" / "predictions.jsonl"),
                "-o", str(report_path),
            ]
        )
        assert rc == 0
        artifacts.append(
            (
                (store / "det" / "predictions.jsonl").read_bytes(),
                report_path.read_bytes(),
            )
        )
    capsys.readouterr()
    assert artifacts[0] == artifacts[1]
    assert "84.00" in artifacts[0][1].decode("utf-8")
    elapsed = time.perf_counter() - started
    assert elapsed < 5.0, elapsed


# 8. The default prompt must render as two parts matching the shipped
# reference text, and an opaque relabel must trip the corresponding lint.


@criterion("default prompt renders as 2 parts matching the reference text; SPECIFICATION relabel trips the opaque-label lint")
def test_prompt_reconstruction_and_lint(scheme, prompt_spec):
    parts = build_prompt(scheme, prompt_spec)
    assert len(parts) == 2
    reference = (DATA / "prompt_reference.txt").read_text(encoding="utf-8")

    def normalize(text):
        return " ".join(text.split())

    # The reference text ends with the question for the held-out utterance,
    # which is rendered per instance rather than shipped inside the parts.
    question = render_question(prompt_spec, HELD_OUT_UTTERANCE.split())
    tail = f"{prompt_spec.question_label} {question}"
    assert normalize(" ".join(parts) + " " + tail) == normalize(reference)

    relabeled = AnnotationScheme(
        act_name=scheme.act_name,
        marker_lexemes=scheme.marker_lexemes,
        tags=tuple(
            TagDef("SPECIFICATION", t.definition, t.open_class) if t.name == "REASON" else t
            for t in scheme.tags
        ),
        no_act_label=scheme.no_act_label,
    )
    findings = [f for f in lint_prompt(prompt_spec, relabeled) if f.code == "opaque-tag-label"]
    hits = [f for f in findings if f.location == "tag:SPECIFICATION"]
    assert hits
    assert all(f.factor == 7 for f in hits)


# 9. Swapping gold and prediction must swap precision and recall exactly.


@criterion("swapping gold and prediction swaps each tag's precision and recall exactly")
def test_evaluator_symmetry(scheme):
    rng = random.Random(1812)
    pairs = []
    for i in range(100):
        instance = random_instance(rng, instance_id=f"sym:{i}")
        pairs.append(
            (
                random_annotation(rng, instance, scheme, act_present=True),
                random_annotation(rng, instance, scheme, act_present=True),
            )
        )
    forward = aggregate(pairs)
    backward = aggregate([(p, g) for g, p in pairs])
    for tag, cell in forward.per_tag.items():
        swapped = backward.per_tag[tag]
        assert cell.tp == swapped.tp, tag
        assert cell.fp == swapped.fn, tag
        assert cell.fn == swapped.fp, tag
        fwd, bwd = cell_metrics(cell), cell_metrics(swapped)
        assert fwd.precision == bwd.recall, tag
        assert fwd.recall == bwd.precision, tag

#!/usr/bin/env python3
"""Regenerate the demo fixture set under fixtures/.

The demo corpus is synthetic casual speech in the conventions of a spoken
transcription corpus: clitics split ("I 'm", "do n't"), anonymisation and
unclear-word placeholders as single tokens, no sentence segmentation. Every
line is exactly 20 tokens with a marker occurrence at index 9 (one line has
a second occurrence at index 10), so extraction yields one aligned window
per line plus one overlapping window for the double marker.

Gold annotations are authored as inline-tagged template strings below and
parsed by a small standalone splitter. The replay fixture echoes gold back
in several response formats, with a fixed set of hand-picked deviations so
that evaluations of the demo run show every error category. The "messy"
variant adds a refusal, an unparseable answer, a truncated answer, and one
missing entry for review-queue demos.

Run from the repository root:  python scripts/build_demo_fixtures.py
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from spanact.corpus import extract_instances, load_corpus, write_instances
from spanact.scheme import Annotation, TagSpan, default_apology_scheme, validate_annotation
from spanact.tagparse import no_act_sentence, render_tagged_text

FIXTURES = ROOT / "fixtures"

# Inline-tagged cores. The build pads each core with untagged filler so the
# first marker lands at token index 9 and the line is exactly 20 tokens.
# An act of None marks instances whose gold is act-absent.
APOLOGY_CORES = [
    "I 'm <INTENSIFIER>really</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> <REASON>for all the noise last night</REASON>",
    "<APOLOGISING>Sorry</APOLOGISING> <REASON>about that</REASON> but I 've got to shoot off now",
    "<APOLOGISER>I</APOLOGISER> 'm <APOLOGISING>sorry</APOLOGISING> <REASON>to bother you</REASON> again --ANONnameM",
    "<APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>love</APOLOGISEE> <REASON>I did n't see you there</REASON>",
    "oh <APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>mum</APOLOGISEE> there you go then",
    "<APOLOGISER>I</APOLOGISER> 'm <INTENSIFIER>terribly</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> <REASON>we can only do this against payment</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>that I 've lost it</REASON> somewhere in the kitchen",
    "<APOLOGISING>Sorry</APOLOGISING> <APOLOGISEE>Mr --ANONnameM</APOLOGISEE> <REASON>I moved too quickly for you</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>about the mess</REASON> erm <REASON>and the smell as well</REASON>",
    "we are <INTENSIFIER>so</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> <REASON>for the delay on this</REASON>",
    "<APOLOGISER>I</APOLOGISER> 'm <APOLOGISING>sorry</APOLOGISING> <REASON>I forgot your birthday</REASON> completely",
    "<APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>darling</APOLOGISEE> <REASON>I 'm not running off with it</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>about the racket upstairs</REASON> it 's the kids",
    "<APOLOGISER>we</APOLOGISER> 're <APOLOGISING>sorry</APOLOGISING> <REASON>about cancelling on you twice</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>--ANONnameF</APOLOGISEE> <REASON>for talking over you</REASON> there",
    "oh I 'm <APOLOGISING>sorry</APOLOGISING> <REASON>I thought you 'd finished</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>for the state of the place</REASON> we 're decorating",
    "<APOLOGISER>I</APOLOGISER> 'm <INTENSIFIER>very</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> <REASON>about your coat</REASON> honestly",
    "<APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>pet</APOLOGISEE> <REASON>I pressed the wrong button</REASON> --UNCLEARWORD",
    "and <APOLOGISER>I</APOLOGISER> do feel <APOLOGISING>sorry</APOLOGISING> <REASON>for shouting earlier on</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>Mr --ANONnameM</APOLOGISEE> <REASON>I keep doing that</REASON>",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>about the wait</REASON> the till 's playing up",
    "erm <APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>everyone</APOLOGISEE> <REASON>for being late again</REASON>",
    "I said <APOLOGISING>sorry</APOLOGISING> <REASON>for losing the tickets</REASON> did n't I",
    "<APOLOGISING>sorry</APOLOGISING> <REASON>to interrupt</REASON> erm <REASON>and to rush you</REASON> as well",
    "yeah <APOLOGISING>sorry</APOLOGISING> <REASON>about the dog barking</REASON> he 's young still",
    "<APOLOGISER>I</APOLOGISER> 'm <APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>--ANONnameN</APOLOGISEE> <REASON>about missing the call</REASON>",
    "<APOLOGISING>Sorry</APOLOGISING> <REASON>about the spelling in that text</REASON> I was rushing",
    "right <APOLOGISING>sorry</APOLOGISING> <REASON>for going on about it</REASON> I 'll stop",
    "<APOLOGISING>sorry</APOLOGISING> <INTENSIFIER>so</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> no wait that 's twice now",
    "I 'm <INTENSIFIER>awfully</INTENSIFIER> <APOLOGISING>sorry</APOLOGISING> <APOLOGISEE>--ANONnameF</APOLOGISEE> <REASON>about the muddle with the dates</REASON>",
]
NO_ACT_CORES = [
    "I 'm sorry to hear that about your nan",
    "I felt sorry for your loss back then",
    "he looked a bit sorry for himself after the match",
    "she said she felt sorry for the neighbours honestly",
    "the garden 's in a sorry state these days",
    "you 'll be sorry when it rains later",
    "I feel sorry for whoever marks these essays",
    "sorry ? what did you say about the bus",
    "a sorry excuse for a sandwich that was",
    "they were sorry to see the shop close down",
    "I 'm sorry to hear the results were n't better",
    "do n't feel sorry for me I 'm fine",
    "sorry ? I could n't hear you over the kettle",
    "he 's a sorry sight in that costume",
    "we were sorry to miss the wedding last June",
    "you sound sorry for yourself again love",
    "--UNCLEARWORD sorry tale that whole business with the car",
]

LEFT_FILLER = ["yeah", "well", "er", "um", "oh", "right", "okay", "mm", "so", "and", "then", "just", "erm", "like", "now", "but"]
RIGHT_FILLER = ["you", "know", "anyway", "then", "really", "though", "still", "right", "yeah", "mate", "today", "again", "now", "here", "fine", "okay"]

TAG_RE = re.compile(r"<(/?)([A-Z_]+)>")
WIDTH = 20
NODE_INDEX = 9


def split_tagged(core: str) -> tuple[list[str], list[tuple[str, int, int]]]:
    """Standalone inline-tag splitter, independent of the package parser."""
    tokens: list[str] = []
    spans: list[tuple[str, int, int]] = []
    open_name: str | None = None
    open_at = 0
    for piece in core.split():
        rest = piece
        while rest:
            m = TAG_RE.match(rest)
            if m:
                if m.group(1):
                    assert open_name == m.group(2), f"mismatched close in {core!r}"
                    spans.append((m.group(2), open_at, len(tokens)))
                    open_name = None
                else:
                    assert open_name is None, f"nested tag in {core!r}"
                    open_name = m.group(2)
                    open_at = len(tokens)
                rest = rest[m.end() :]
            else:
                nxt = TAG_RE.search(rest)
                text = rest[: nxt.start()] if nxt else rest
                tokens.append(text)
                rest = rest[len(text) :]
    assert open_name is None, f"unclosed tag in {core!r}"
    return tokens, spans


def build_line(core: str, index: int) -> tuple[str, list[tuple[str, int, int]]]:
    tokens, spans = split_tagged(core)
    marker_at = next(i for i, t in enumerate(tokens) if t.casefold() == "sorry")
    prepend = NODE_INDEX - marker_at
    assert prepend >= 0, f"marker too deep in {core!r}"
    left = [LEFT_FILLER[(index + k) % len(LEFT_FILLER)] for k in range(prepend)]
    padded = left + tokens
    need = WIDTH - len(padded)
    assert need >= 0, f"core too long ({len(padded)} tokens): {core!r}"
    right = [RIGHT_FILLER[(index + k) % len(RIGHT_FILLER)] for k in range(need)]
    padded = padded + right
    shifted = [(tag, s + prepend, e + prepend) for tag, s, e in spans]
    for tag, s, e in shifted:
        assert e <= WIDTH, f"span {tag} leaves the window in {core!r}"
    assert len(padded) == WIDTH
    return " ".join(padded), shifted


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    scheme = default_apology_scheme()

    lines: list[str] = []
    gold_by_line: list[tuple[bool, list[tuple[str, int, int]]]] = []
    cores = [(core, True) for core in APOLOGY_CORES] + [(core, False) for core in NO_ACT_CORES]
    # Interleave act/no-act lines so the corpus reads naturally.
    ordered: list[tuple[str, bool]] = []
    act_iter = iter([c for c in cores if c[1]])
    no_iter = iter([c for c in cores if not c[1]])
    for i in range(len(cores)):
        src = act_iter if i % 3 != 2 else no_iter
        try:
            ordered.append(next(src))
        except StopIteration:
            other = no_iter if src is act_iter else act_iter
            ordered.append(next(other))
    for idx, (core, is_act) in enumerate(ordered):
        line, spans = build_line(core, idx)
        if not is_act:
            spans = []
        lines.append(line)
        gold_by_line.append((is_act, spans))

    corpus_path = FIXTURES / "demo_corpus.txt"
    corpus_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    stream = load_corpus(corpus_path, source_id="demo")
    instances = extract_instances(stream, "sorry", width=WIDTH)
    write_instances(instances, FIXTURES / "demo_instances.jsonl")

    # Gold per extracted instance: template spans shifted into the window.
    gold: list[Annotation] = []
    for inst in instances:
        start = inst.source_span.start
        # Windows align to lines; the double-marker line also yields one
        # window shifted right, which borrows the next line's first token.
        line_idx, offset = divmod(start, WIDTH)
        is_act, spans = gold_by_line[line_idx]
        local = [
            TagSpan(tag, s - offset, e - offset)
            for tag, s, e in spans
            if s - offset >= 0 and e - offset <= WIDTH
        ]
        assert len(local) == len(spans), f"window {inst.id} clips a gold span"
        ann = Annotation(
            instance_id=inst.id,
            act_present=is_act,
            spans=tuple(sorted(local, key=lambda s: (s.start, s.end))),
            provenance="gold",
        )
        problems = validate_annotation(ann, scheme, inst)
        assert not problems, f"{inst.id}: {problems}"
        gold.append(ann)

    with (FIXTURES / "demo_gold.jsonl").open("w", encoding="utf-8") as fh:
        for ann in gold:
            fh.write(json.dumps(ann.to_dict(), ensure_ascii=False) + "\n")

    by_id = {i.id: i for i in instances}

    def exact_response(ann: Annotation, style: int) -> str:
        inst = by_id[ann.instance_id]
        if not ann.act_present:
            return no_act_sentence(scheme.act_name, inst.text)
        tagged = render_tagged_text(ann, inst, scheme)
        if style == 1:
            return f'Sure, here is the result.\n\nThe annotated version is: "{tagged}"'
        if style == 2:
            return f"1. Annotated version: {tagged}"
        return f"The annotated version is: {tagged}"

    def without_tag(ann: Annotation, tag: str) -> Annotation:
        kept = tuple(s for s in ann.spans if s.tag != tag)
        return replace(ann, spans=kept)

    def shrink_first(ann: Annotation, tag: str) -> Annotation:
        out = []
        done = False
        for s in ann.spans:
            if not done and s.tag == tag and s.end - s.start >= 2:
                out.append(TagSpan(s.tag, s.start, s.end - 1))
                done = True
            else:
                out.append(s)
        assert done, f"no shrinkable {tag} span on {ann.instance_id}"
        return replace(ann, spans=tuple(out))

    def relabel_first(ann: Annotation, old: str, new: str) -> Annotation:
        out = []
        done = False
        for s in ann.spans:
            if not done and s.tag == old:
                out.append(TagSpan(new, s.start, s.end))
                done = True
            else:
                out.append(s)
        assert done, f"no {old} span on {ann.instance_id}"
        return replace(ann, spans=tuple(out))

    act_ids = [a.instance_id for a in gold if a.act_present]
    no_act_ids = [a.instance_id for a in gold if not a.act_present]
    deviations: dict[str, Annotation | str] = {}
    # Boundary: shrink a REASON span on two instances.
    deviations[act_ids[2]] = shrink_first(next(a for a in gold if a.instance_id == act_ids[2]), "REASON")
    deviations[act_ids[9]] = shrink_first(next(a for a in gold if a.instance_id == act_ids[9]), "REASON")
    # Missed: drop an INTENSIFIER and an APOLOGISEE.
    g = next(a for a in gold if a.instance_id == act_ids[0])
    deviations[act_ids[0]] = without_tag(g, "INTENSIFIER")
    g = next(a for a in gold if a.instance_id == act_ids[7])
    deviations[act_ids[7]] = without_tag(g, "APOLOGISEE")
    # Wrong label: call an APOLOGISEE a REASON.
    g = next(a for a in gold if a.instance_id == act_ids[11])
    deviations[act_ids[11]] = relabel_first(g, "APOLOGISEE", "REASON")
    # Act disagreements in both directions.
    g = next(a for a in gold if a.instance_id == act_ids[16])
    deviations[act_ids[16]] = "NO_ACT"
    na = next(a for a in gold if a.instance_id == no_act_ids[1])
    na_inst = by_id[na.instance_id]
    deviations[no_act_ids[1]] = Annotation(
        na.instance_id,
        True,
        (TagSpan("APOLOGISING", na_inst.marker_positions[0], na_inst.marker_positions[0] + 1),),
        "gold",
    )
    # Spurious extra span on untagged trailing filler.
    g = next(a for a in gold if a.instance_id == act_ids[20])
    tail = TagSpan("APOLOGISEE", WIDTH - 2, WIDTH - 1)
    assert all(s.end <= tail.start for s in g.spans)
    deviations[act_ids[20]] = replace(g, spans=g.spans + (tail,))

    replay: list[dict[str, str]] = []
    for i, ann in enumerate(gold):
        dev = deviations.get(ann.instance_id)
        if dev == "NO_ACT":
            inst = by_id[ann.instance_id]
            text = no_act_sentence(scheme.act_name, inst.text)
        elif isinstance(dev, Annotation):
            text = exact_response(dev, style=0)
        else:
            text = exact_response(ann, style=i % 3)
        replay.append({"instance_id": ann.instance_id, "response_text": text})

    with (FIXTURES / "demo_replay.jsonl").open("w", encoding="utf-8") as fh:
        for record in replay:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    # Messy variant: same responses plus review-queue material.
    messy = {r["instance_id"]: r["response_text"] for r in replay}
    refusal_id = act_ids[4]
    unparseable_id = act_ids[10]
    truncated_id = act_ids[14]
    missing_id = no_act_ids[3]
    messy[refusal_id] = (
        "I cannot assist with annotating this utterance. If you have another "
        "question, I am happy to help."
    )
    messy[unparseable_id] = (
        "That is an interesting stretch of conversation about household life. "
        "It mentions an apology but I was asked to keep my answer brief."
    )
    trunc = by_id[truncated_id]
    trunc_gold = next(a for a in gold if a.instance_id == truncated_id)
    kept = [s for s in trunc_gold.spans if s.end <= 12]
    assert any(s.tag == "APOLOGISING" for s in kept)
    partial = Annotation(truncated_id, True, tuple(kept), "gold")

    class _W:  # render over a clipped pseudo-instance
        id = truncated_id
        tokens = trunc.tokens[:12]

    messy[truncated_id] = "The annotated version is: " + render_tagged_text(partial, _W, scheme)
    del messy[missing_id]

    with (FIXTURES / "demo_replay_messy.jsonl").open("w", encoding="utf-8") as fh:
        for iid, text in messy.items():
            fh.write(json.dumps({"instance_id": iid, "response_text": text}, ensure_ascii=False) + "\n")

    (FIXTURES / "replay_backend.json").write_text(
        json.dumps({"kind": "replay", "fixture": "demo_replay.jsonl", "parallelism": 4}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    (FIXTURES / "replay_backend_messy.json").write_text(
        json.dumps({"kind": "replay", "fixture": "demo_replay_messy.jsonl", "parallelism": 4}, indent=2)
        + "\n",
        encoding="utf-8",
    )

    n_act = sum(1 for a in gold if a.act_present)
    n_multi_ifid = sum(1 for a in gold if sum(s.tag == "APOLOGISING" for s in a.spans) > 1)
    n_multi_reason = sum(1 for a in gold if sum(s.tag == "REASON" for s in a.spans) > 1)
    print(
        f"{len(instances)} instances ({n_act} act, {len(gold) - n_act} no-act, "
        f"{n_multi_ifid} multi-ifid, {n_multi_reason} multi-REASON)"
    )


if __name__ == "__main__":
    main()

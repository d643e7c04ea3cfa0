"""Few-shot prompt modelling: render, split into parts, and lint.

A prompt is a preamble, a definitions block derived from the scheme, and an
ordered list of worked exemplars, each a Question/Answer pair. Long prompts
are split at exemplar boundaries into parts no longer than part_budget
characters; every part after the first opens with a continuation header.
The per-instance question is rendered separately and sent after all parts.

The linter encodes eight empirically-motivated prompt-quality factors as
heuristics (see lint_prompt). They are advice, not hard constraints.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import DataError
from .scheme import AnnotationScheme, canonical_json, default_apology_scheme

EXEMPLAR_CRITERIA = ("representativeness", "diversity", "conciseness")

DEFAULT_PREAMBLE = "Please learn the following contents."
DEFAULT_EXAMPLES_HEADER = "Here are some examples:"
DEFAULT_CONTINUATION_HEADER = "Here are some other examples:"
DEFAULT_PART_BUDGET = 1700

_UTTERANCE_SLOT = "{UTTERANCE}"
# Opacity heuristic bound: the longest self-describing default tag name is
# 11 chars; anything past 14 is treated as unreadable at a glance.
MAX_TRANSPARENT_TAG_LEN = 14


@dataclass(frozen=True)
class Exemplar:
    """One worked Question/Answer pair.

    response is either an annotated version or a no-act sentence. criteria
    records why the exemplar was chosen; ungrammatical marks utterances kept
    despite broken grammar (spontaneous speech), which the linter flags.
    """

    utterance: str
    response: str
    rank: int
    criteria: tuple[str, ...] = ()
    ungrammatical: bool = False

    def __post_init__(self) -> None:
        if not self.utterance or not self.response:
            raise DataError(f"exemplar rank {self.rank}: empty utterance or response")
        for c in self.criteria:
            if c not in EXEMPLAR_CRITERIA:
                raise DataError(f"unknown exemplar criterion {c!r}")


@dataclass(frozen=True)
class PromptSpec:
    """The full prompt model; rendering it is deterministic."""

    preamble: str
    definitions_block: str
    exemplars: tuple[Exemplar, ...]
    question_template: str
    part_budget: int = DEFAULT_PART_BUDGET
    exemplar_question_template: str = ""
    examples_header: str = DEFAULT_EXAMPLES_HEADER
    continuation_header: str = DEFAULT_CONTINUATION_HEADER
    question_label: str = "Question:"
    answer_label: str = "Answer:"
    blocklist: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.question_template.count(_UTTERANCE_SLOT) != 1:
            raise DataError("question_template must contain exactly one {UTTERANCE}")
        if self.exemplar_question_template and (
            self.exemplar_question_template.count(_UTTERANCE_SLOT) != 1
        ):
            raise DataError("exemplar_question_template must contain exactly one {UTTERANCE}")
        ranks = [e.rank for e in self.exemplars]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise DataError("exemplar ranks must be strictly increasing")
        if self.part_budget < 1:
            raise DataError("part_budget must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "preamble": self.preamble,
            "definitions_block": self.definitions_block,
            "exemplars": [
                {
                    "utterance": e.utterance,
                    "response": e.response,
                    "rank": e.rank,
                    "criteria": list(e.criteria),
                    "ungrammatical": e.ungrammatical,
                }
                for e in self.exemplars
            ],
            "question_template": self.question_template,
            "part_budget": self.part_budget,
            "exemplar_question_template": self.exemplar_question_template,
            "examples_header": self.examples_header,
            "continuation_header": self.continuation_header,
            "question_label": self.question_label,
            "answer_label": self.answer_label,
            "blocklist": list(self.blocklist),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PromptSpec":
        try:
            return cls(
                preamble=data["preamble"],
                definitions_block=data["definitions_block"],
                exemplars=tuple(
                    Exemplar(
                        utterance=e["utterance"],
                        response=e["response"],
                        rank=int(e["rank"]),
                        criteria=tuple(e.get("criteria", ())),
                        ungrammatical=bool(e.get("ungrammatical", False)),
                    )
                    for e in data["exemplars"]
                ),
                question_template=data["question_template"],
                part_budget=int(data.get("part_budget", DEFAULT_PART_BUDGET)),
                exemplar_question_template=data.get("exemplar_question_template", ""),
                examples_header=data.get("examples_header", DEFAULT_EXAMPLES_HEADER),
                continuation_header=data.get("continuation_header", DEFAULT_CONTINUATION_HEADER),
                question_label=data.get("question_label", "Question:"),
                answer_label=data.get("answer_label", "Answer:"),
                blocklist=tuple(data.get("blocklist", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed prompt spec: {exc}") from exc


@dataclass(frozen=True)
class Finding:
    """One linter result. factor numbers the heuristic (1-8)."""

    code: str
    severity: str  # "error" | "warning" | "info"
    message: str
    location: str
    factor: int


def definitions_block_for(scheme: AnnotationScheme) -> str:
    lines = [
        f"The speech act of {scheme.act_name} may contain the following functional elements:"
    ]
    lines.extend(f"{t.name}: {t.definition}" for t in scheme.tags)
    return "\n\n".join(lines)


def default_question_template(scheme: AnnotationScheme) -> str:
    names = [t.name for t in scheme.tags]
    listed = ", ".join(names[:-1]) + ", or " + names[-1] if len(names) > 1 else names[0]
    return (
        f"Can you detect the speech act of {scheme.act_name} and annotate any "
        f"functional elements such as {listed} in the following utterance? "
        "Please exclude any irrelevant texts.\n\n{UTTERANCE}"
    )


def default_exemplar_question_template(scheme: AnnotationScheme) -> str:
    return (
        f'Can you annotate the speech act of {scheme.act_name} in the utterance "{{UTTERANCE}}"?'
    )


def default_prompt_spec(scheme: AnnotationScheme | None = None) -> PromptSpec:
    """The shipped ten-exemplar apology prompt."""
    scheme = scheme or default_apology_scheme()
    rows: list[tuple[str, str, tuple[str, ...]]] = [
        (
            "Ah, I 'm really sorry for all that.",
            "The annotated version is: Ah, <APOLOGISER> I </APOLOGISER> 'm "
            "<INTENSIFIER> really </INTENSIFIER> <APOLOGISING> sorry </APOLOGISING> "
            "<REASON> for all that </REASON>.",
            ("representativeness",),
        ),
        (
            "Sorry about that, but I 've got to go to work.",
            "The annotated version is: <APOLOGISING> Sorry </APOLOGISING> "
            "<REASON> about that </REASON>, but I 've got to go to work.",
            ("representativeness", "conciseness"),
        ),
        (
            "Hello Mr [gap:name], I 'm sorry to bother you, my name is Kathy and I represent",
            "The annotated version is: Hello <APOLOGISEE> Mr [gap:name] </APOLOGISEE>, "
            "<APOLOGISER> I </APOLOGISER> 'm <APOLOGISING> sorry </APOLOGISING> "
            "<REASON> to bother you </REASON>, my name is Kathy and I represent",
            ("diversity",),
        ),
        (
            "Sorry sorry Mr [gap:name], I moved too quickly for you.",
            "The annotated version is: <APOLOGISING> Sorry </APOLOGISING> "
            "<APOLOGISING> sorry </APOLOGISING> <APOLOGISEE> Mr [gap:name] </APOLOGISEE>, "
            "<REASON> I moved too quickly for you </REASON>",
            ("diversity",),
        ),
        (
            "I'm sorry to hear that",
            'No speech act of apology is present in the utterance "I\'m sorry to hear that".',
            ("diversity",),
        ),
        (
            "I felt sorry for your loss",
            'No speech act of apology is present in the utterance "I felt sorry for your loss".',
            ("diversity",),
        ),
        (
            "I 'm sorry that I 've lost it",
            "The annotated version is: <APOLOGISER> I </APOLOGISER> 'm "
            "<APOLOGISING> sorry </APOLOGISING> <REASON> that I 've lost it </REASON>.",
            ("representativeness", "conciseness"),
        ),
        (
            "Er, I think there is a tendending now, for them to say, oh, I 'm terribly "
            "sorry, we can only do this against payment.",
            "The annotated version is: Er, I think there is a tendending now, for them to "
            "say, oh, <APOLOGISER> I </APOLOGISER> 'm <INTENSIFIER> terribly </INTENSIFIER> "
            "<APOLOGISING> sorry </APOLOGISING>, <REASON> we can only do this against "
            "payment </REASON>.",
            ("diversity",),
        ),
        (
            "Oh sorry darling I 'm not running off with you.",
            "The annotated version is: Oh <APOLOGISING> sorry </APOLOGISING> "
            "<APOLOGISEE> darling </APOLOGISEE> I 'm not running off with you.",
            ("diversity", "conciseness"),
        ),
        (
            "oh sorry mum there you go okay",
            "The annotated version is: oh <APOLOGISING> sorry </APOLOGISING> "
            "<APOLOGISEE> mum </APOLOGISEE> there you go okay",
            ("conciseness",),
        ),
    ]
    exemplars = tuple(
        Exemplar(utterance=u, response=r, rank=i + 1, criteria=c)
        for i, (u, r, c) in enumerate(rows)
    )
    return PromptSpec(
        preamble=DEFAULT_PREAMBLE,
        definitions_block=definitions_block_for(scheme),
        exemplars=exemplars,
        question_template=default_question_template(scheme),
        part_budget=DEFAULT_PART_BUDGET,
        exemplar_question_template=default_exemplar_question_template(scheme),
    )


def render_exemplar(spec: PromptSpec, exemplar: Exemplar) -> str:
    template = spec.exemplar_question_template or spec.question_template
    question = template.replace(_UTTERANCE_SLOT, exemplar.utterance)
    q_label = f"{spec.question_label} " if spec.question_label else ""
    a_label = f"{spec.answer_label} " if spec.answer_label else ""
    return f"{q_label}{question}\n\n{a_label}{exemplar.response}"


def build_prompt(scheme: AnnotationScheme, spec: PromptSpec) -> list[str]:
    """Render and split the prompt; parts never divide an exemplar.

    Splitting is greedy on character length: exemplars are appended in rank
    order until the next one would push the part past part_budget. A part
    that cannot hold even one exemplar is a data error.
    """
    definitions = spec.definitions_block or definitions_block_for(scheme)
    head = "\n\n".join(b for b in (spec.preamble, definitions, spec.examples_header) if b)
    if len(head) > spec.part_budget:
        raise DataError(
            f"prompt head is {len(head)} chars, over the part budget {spec.part_budget}"
        )
    parts: list[str] = []
    current = head
    has_exemplar = False
    for exemplar in spec.exemplars:
        rendered = render_exemplar(spec, exemplar)
        candidate = f"{current}\n\n{rendered}" if current else rendered
        if len(candidate) <= spec.part_budget:
            current = candidate
            has_exemplar = True
            continue
        if not has_exemplar:
            raise DataError(
                f"exemplar rank {exemplar.rank} cannot fit in any part "
                f"(needs {len(candidate)} chars, budget {spec.part_budget})"
            )
        parts.append(current)
        current = f"{spec.continuation_header}\n\n{rendered}"
        has_exemplar = True
        if len(current) > spec.part_budget:
            raise DataError(
                f"exemplar rank {exemplar.rank} alone exceeds the part budget "
                f"({len(current)} > {spec.part_budget})"
            )
    parts.append(current)
    return parts


def render_question(spec: PromptSpec, instance) -> str:
    """The per-instance question: tokens joined by single spaces, quoted.

    instance may be a CorpusInstance or any sequence of token strings.
    """
    tokens = getattr(instance, "tokens", instance)
    text = " ".join(tokens)
    return spec.question_template.replace(_UTTERANCE_SLOT, f'"{text}"')


def _split_groups(spec: PromptSpec, scheme: AnnotationScheme) -> list[list[Exemplar]]:
    """Which exemplars land in which part, mirroring build_prompt's split.

    Tolerates over-budget specs (build_prompt would raise) by keeping the
    offending exemplar in the current group; the budget lint reports it.
    """
    definitions = spec.definitions_block or definitions_block_for(scheme)
    head = "\n\n".join(b for b in (spec.preamble, definitions, spec.examples_header) if b)
    groups: list[list[Exemplar]] = [[]]
    current_len = len(head)
    has_exemplar = False
    for exemplar in spec.exemplars:
        rendered_len = len(render_exemplar(spec, exemplar))
        if current_len + 2 + rendered_len <= spec.part_budget or not has_exemplar:
            current_len += 2 + rendered_len
            groups[-1].append(exemplar)
            has_exemplar = True
            continue
        groups.append([exemplar])
        current_len = len(spec.continuation_header) + 2 + rendered_len
    return groups


def lint_prompt(spec: PromptSpec, scheme: AnnotationScheme) -> list[Finding]:
    """Apply the eight prompt-quality factors.

    (1) exemplars must use an explicit Question/Answer layout;
    (2) exemplar utterances flagged ungrammatical in metadata;
    (3) the question should name the task a "speech act";
    (4) the question should enumerate every tag name;
    (5) nothing may exceed the length budget (predicts a build failure);
    (6) each open-class tag exemplified anywhere should be exemplified in
        the first part, where it gets the most attention;
    (7) tag labels should be self-describing: the name should appear in its
        own definition and stay short;
    (8) exemplars must avoid configured blocklist words that backends
        refuse to reproduce.
    """
    findings: list[Finding] = []
    if not spec.question_label or not spec.answer_label:
        findings.append(
            Finding(
                "qa-layout-missing",
                "warning",
                "exemplars are not rendered as explicit Question/Answer pairs",
                "question_label/answer_label",
                factor=1,
            )
        )
    for exemplar in spec.exemplars:
        if exemplar.ungrammatical:
            findings.append(
                Finding(
                    "ungrammatical-exemplar",
                    "warning",
                    f"exemplar rank {exemplar.rank} is flagged ungrammatical",
                    f"exemplar[{exemplar.rank}]",
                    factor=2,
                )
            )
    if "speech act" not in spec.question_template.casefold():
        findings.append(
            Finding(
                "vague-task-phrasing",
                "warning",
                'question does not name the task a "speech act"',
                "question_template",
                factor=3,
            )
        )
    missing = [
        t.name
        for t in scheme.tags
        if not re.search(rf"\b{re.escape(t.name)}\b", spec.question_template)
    ]
    if missing:
        findings.append(
            Finding(
                "tags-not-enumerated",
                "warning",
                f"question does not enumerate tag(s): {', '.join(missing)}",
                "question_template",
                factor=4,
            )
        )
    findings.extend(_lint_budget(spec, scheme))
    findings.extend(_lint_ordering(spec, scheme))
    for tag in scheme.tags:
        opaque_name = tag.name.casefold() not in tag.definition.casefold()
        too_long = len(tag.name) > MAX_TRANSPARENT_TAG_LEN
        if opaque_name or too_long:
            why = "does not appear in its own definition" if opaque_name else "is over 14 characters"
            findings.append(
                Finding(
                    "opaque-tag-label",
                    "warning",
                    f"tag name {tag.name} {why}; models mislabel opaque tags",
                    f"tag:{tag.name}",
                    factor=7,
                )
            )
    if spec.blocklist:
        words = [w.casefold() for w in spec.blocklist]
        for exemplar in spec.exemplars:
            haystack = f"{exemplar.utterance} {exemplar.response}".casefold()
            hits = [w for w in words if w in haystack]
            if hits:
                findings.append(
                    Finding(
                        "blocklisted-word",
                        "error",
                        f"exemplar rank {exemplar.rank} contains blocklisted word(s): "
                        f"{', '.join(sorted(hits))}",
                        f"exemplar[{exemplar.rank}]",
                        factor=8,
                    )
                )
    return findings


def _lint_budget(spec: PromptSpec, scheme: AnnotationScheme) -> list[Finding]:
    findings = []
    definitions = spec.definitions_block or definitions_block_for(scheme)
    head = "\n\n".join(b for b in (spec.preamble, definitions, spec.examples_header) if b)
    if len(head) > spec.part_budget:
        findings.append(
            Finding(
                "head-over-budget",
                "error",
                f"preamble + definitions + header is {len(head)} chars "
                f"(budget {spec.part_budget})",
                "preamble",
                factor=5,
            )
        )
    for exemplar in spec.exemplars:
        needed = len(spec.continuation_header) + 2 + len(render_exemplar(spec, exemplar))
        if needed > spec.part_budget:
            findings.append(
                Finding(
                    "exemplar-over-budget",
                    "error",
                    f"exemplar rank {exemplar.rank} needs {needed} chars alone "
                    f"(budget {spec.part_budget})",
                    f"exemplar[{exemplar.rank}]",
                    factor=5,
                )
            )
    return findings


def _lint_ordering(spec: PromptSpec, scheme: AnnotationScheme) -> list[Finding]:
    open_tags = [t.name for t in scheme.tags if t.open_class]
    if not open_tags or not spec.exemplars:
        return []
    groups = _split_groups(spec, scheme)
    first = groups[0]
    findings = []
    for name in open_tags:
        pattern = re.compile(rf"<{re.escape(name)}>")
        anywhere = any(pattern.search(e.response) for e in spec.exemplars)
        in_first = any(pattern.search(e.response) for e in first)
        if anywhere and not in_first:
            findings.append(
                Finding(
                    "open-class-tag-late",
                    "warning",
                    f"no {name} exemplar in the first part; early parts get "
                    "the most attention",
                    f"tag:{name}",
                    factor=6,
                )
            )
    return findings


def prompt_hash(spec: PromptSpec) -> str:
    return hashlib.sha256(canonical_json(spec.to_dict()).encode("utf-8")).hexdigest()


def load_prompt_spec(path: str | Path) -> PromptSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read prompt spec {path}: {exc}") from exc
    return PromptSpec.from_dict(data)


def save_prompt_spec(spec: PromptSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")

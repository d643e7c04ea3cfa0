"""Tag schemes and span annotations for marker-anchored speech acts.

A scheme names one speech act, the marker lexemes that anchor it, and the
functional-element tags a span may carry. Exactly one tag is the act
indicator (the "ifid" tag); an annotation that asserts the act must contain
at least one ifid span, and every ifid span must cover a marker token.

Annotations address token indices, half-open: a span (start, end) covers
tokens[start:end] of the instance it belongs to.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .errors import DataError, UsageError

TAG_NAME_RE = re.compile(r"^[A-Z][A-Z_]*$")
PROVENANCE_RE = re.compile(r"^(gold|llm-run:.+|human:.+)$")


@dataclass(frozen=True)
class TagDef:
    """One functional-element tag.

    open_class marks tags whose fillers are drawn from open vocabulary
    (free text) rather than a small closed set; the prompt linter uses it.
    """

    name: str
    definition: str
    open_class: bool = False
    is_ifid: bool = False

    def __post_init__(self) -> None:
        if not TAG_NAME_RE.match(self.name):
            raise DataError(
                f"tag name {self.name!r} must be uppercase ASCII letters/underscores"
            )
        if not self.definition.strip():
            raise DataError(f"tag {self.name} has an empty definition")


@dataclass(frozen=True)
class AnnotationScheme:
    """A complete tag scheme for one speech act."""

    act_name: str
    marker_lexemes: tuple[str, ...]
    tags: tuple[TagDef, ...]
    no_act_label: str

    def __post_init__(self) -> None:
        if not self.act_name:
            raise DataError("scheme act_name must be non-empty")
        if not self.marker_lexemes:
            raise DataError("scheme needs at least one marker lexeme")
        names = [t.name for t in self.tags]
        if len(set(names)) != len(names):
            raise DataError("scheme tag names must be unique")
        ifids = [t for t in self.tags if t.is_ifid]
        if len(ifids) != 1:
            raise DataError("scheme must have exactly one ifid tag")
        if self.no_act_label in names or not self.no_act_label:
            raise DataError("no_act_label must be non-empty and distinct from tag names")

    @property
    def ifid_tag(self) -> TagDef:
        return next(t for t in self.tags if t.is_ifid)

    def tag_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tags)

    def tag(self, name: str) -> TagDef:
        for t in self.tags:
            if t.name == name:
                return t
        raise DataError(f"unknown tag {name!r}")

    def has_tag(self, name: str) -> bool:
        return any(t.name == name for t in self.tags)

    def is_marker(self, token: str) -> bool:
        folded = token.casefold()
        return any(folded == m.casefold() for m in self.marker_lexemes)

    def to_dict(self) -> dict[str, Any]:
        return {
            "act_name": self.act_name,
            "marker_lexemes": list(self.marker_lexemes),
            "tags": [
                {
                    "name": t.name,
                    "definition": t.definition,
                    "open_class": t.open_class,
                    "is_ifid": t.is_ifid,
                }
                for t in self.tags
            ],
            "no_act_label": self.no_act_label,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AnnotationScheme":
        try:
            tags = tuple(
                TagDef(
                    name=t["name"],
                    definition=t["definition"],
                    open_class=bool(t.get("open_class", False)),
                    is_ifid=bool(t.get("is_ifid", False)),
                )
                for t in data["tags"]
            )
            return cls(
                act_name=data["act_name"],
                marker_lexemes=tuple(data["marker_lexemes"]),
                tags=tags,
                no_act_label=data["no_act_label"],
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed scheme record: {exc}") from exc


@dataclass(frozen=True, order=True)
class TagSpan:
    """A half-open token span carrying one tag."""

    tag: str
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise DataError(f"bad span bounds ({self.start}, {self.end})")

    def to_dict(self) -> dict[str, Any]:
        return {"tag": self.tag, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TagSpan":
        try:
            return cls(tag=data["tag"], start=int(data["start"]), end=int(data["end"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed span record: {exc}") from exc


@dataclass(frozen=True)
class Annotation:
    """One instance's labelling: act presence plus zero or more tag spans.

    provenance is one of "gold", "llm-run:<run-id>", or "human:<reviewer-id>".
    Construction is permissive; validate_annotation reports invariant
    violations so that suspect data can be loaded, inspected and routed to
    review instead of being rejected at parse time.
    """

    instance_id: str
    act_present: bool
    spans: tuple[TagSpan, ...] = ()
    provenance: str = "gold"

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "act_present": self.act_present,
            "spans": [s.to_dict() for s in self.spans],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Annotation":
        try:
            return cls(
                instance_id=data["instance_id"],
                act_present=bool(data["act_present"]),
                spans=tuple(TagSpan.from_dict(s) for s in data["spans"]),
                provenance=data.get("provenance", "gold"),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed annotation record: {exc}") from exc


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by validation."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate_spans(
    spans: Sequence[TagSpan],
    act_present: bool,
    tokens: Sequence[str],
    scheme: AnnotationScheme,
) -> list[Violation]:
    """Check span invariants against a raw token sequence.

    Returns every violation found rather than stopping at the first, so a
    reviewer sees the full damage at once.
    """
    out: list[Violation] = []
    if not act_present and spans:
        out.append(
            Violation("spans-on-no-act", f"{len(spans)} span(s) on an act-absent annotation")
        )
    ifid = scheme.ifid_tag.name
    if act_present and not any(s.tag == ifid for s in spans):
        out.append(Violation("missing-ifid-span", f"act asserted but no {ifid} span"))
    n = len(tokens)
    for s in spans:
        if not scheme.has_tag(s.tag):
            out.append(Violation("unknown-tag", f"span tag {s.tag!r} not in scheme"))
        if s.end > n:
            out.append(
                Violation("span-out-of-range", f"span ({s.start}, {s.end}) exceeds {n} tokens")
            )
        elif s.tag == ifid and not any(scheme.is_marker(t) for t in tokens[s.start : s.end]):
            covered = " ".join(tokens[s.start : s.end])
            out.append(
                Violation("ifid-span-without-marker", f"{ifid} span covers no marker: {covered!r}")
            )
    starts = [s.start for s in spans]
    if starts != sorted(starts):
        out.append(Violation("unsorted-spans", "spans not sorted by start"))
    by_start = sorted(spans, key=lambda s: (s.start, s.end))
    for prev, cur in zip(by_start, by_start[1:]):
        if cur.start < prev.end:
            out.append(
                Violation(
                    "overlapping-spans",
                    f"{prev.tag} ({prev.start}, {prev.end}) overlaps "
                    f"{cur.tag} ({cur.start}, {cur.end})",
                )
            )
    return out


def validate_annotation(annotation: Annotation, scheme: AnnotationScheme, instance) -> list[Violation]:
    """Validate an annotation against its instance and scheme.

    The instance must expose .id and .tokens (corpus.CorpusInstance does).
    An id mismatch is a caller bug, not a data problem, and raises.
    """
    if annotation.instance_id != instance.id:
        raise UsageError(
            f"annotation for {annotation.instance_id!r} validated against instance {instance.id!r}"
        )
    out = validate_spans(annotation.spans, annotation.act_present, instance.tokens, scheme)
    if not PROVENANCE_RE.match(annotation.provenance):
        out.append(
            Violation(
                "bad-provenance",
                f"provenance {annotation.provenance!r} not gold/llm-run:<id>/human:<id>",
            )
        )
    return out


def default_apology_scheme() -> AnnotationScheme:
    """The shipped apology scheme: marker 'sorry', five functional elements."""
    return AnnotationScheme(
        act_name="apology",
        marker_lexemes=("sorry",),
        tags=(
            TagDef(
                name="APOLOGISING",
                definition="the element that indicates the act of apologising",
                open_class=False,
                is_ifid=True,
            ),
            TagDef(
                name="REASON",
                definition="the offense or the reason for the apology",
                open_class=True,
            ),
            TagDef(
                name="APOLOGISER",
                definition="the person who apologises",
                open_class=False,
            ),
            TagDef(
                name="APOLOGISEE",
                definition="the person to whom the apology is made",
                open_class=True,
            ),
            TagDef(
                name="INTENSIFIER",
                definition="the element that upgrades the degree of apology",
                open_class=True,
            ),
        ),
        no_act_label="NO_APOLOGY",
    )


def canonical_json(data: Any) -> str:
    """Key-sorted, minimal-separator JSON used for hashing."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def scheme_hash(scheme: AnnotationScheme) -> str:
    return hashlib.sha256(canonical_json(scheme.to_dict()).encode("utf-8")).hexdigest()


def load_scheme(path: str | Path) -> AnnotationScheme:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scheme {path}: {exc}") from exc
    return AnnotationScheme.from_dict(data)


def save_scheme(scheme: AnnotationScheme, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scheme.to_dict(), indent=2) + "\n", encoding="utf-8")

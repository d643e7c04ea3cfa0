"""Marker-anchored instance extraction from tokenised text.

The unit of annotation is a fixed-width keyword-in-context window around
each occurrence of a marker lexeme. For the default width of 20 the window
reaches up to 9 tokens left of the marker and fills the remainder to the
right; at text boundaries the window is clipped and then back-filled on the
other side so it stays at full width whenever the text allows.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import DataError

DEFAULT_WIDTH = 20
MAX_WIDTH = 20

_WS_RE = re.compile(r"\s+")


@dataclass(frozen=True)
class SourceSpan:
    """A half-open token range in a named source text."""

    source_id: str
    start: int
    end: int

    def to_dict(self) -> dict[str, Any]:
        return {"source_id": self.source_id, "start": self.start, "end": self.end}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SourceSpan":
        try:
            return cls(data["source_id"], int(data["start"]), int(data["end"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed source_span: {exc}") from exc


@dataclass(frozen=True)
class TokenStream:
    """A tokenised source text. Tokens must be non-empty and whitespace-free."""

    source_id: str
    tokens: tuple[str, ...]

    def __post_init__(self) -> None:
        for i, tok in enumerate(self.tokens):
            if not tok or _WS_RE.search(tok):
                raise DataError(f"{self.source_id}: token {i} is empty or contains whitespace")


@dataclass(frozen=True)
class CorpusInstance:
    """One annotation window: tokens plus marker positions, tied to its source."""

    id: str
    tokens: tuple[str, ...]
    marker_positions: tuple[int, ...]
    source_span: SourceSpan

    def __post_init__(self) -> None:
        if not 1 <= len(self.tokens) <= MAX_WIDTH:
            raise DataError(
                f"instance {self.id}: window must be 1..{MAX_WIDTH} tokens, got {len(self.tokens)}"
            )
        if not self.marker_positions:
            raise DataError(f"instance {self.id}: no marker positions")
        for prev, cur in zip(self.marker_positions, self.marker_positions[1:]):
            if cur <= prev:
                raise DataError(f"instance {self.id}: marker positions not strictly increasing")
        for p in self.marker_positions:
            if not 0 <= p < len(self.tokens):
                raise DataError(f"instance {self.id}: marker position {p} out of range")

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "tokens": list(self.tokens),
            "marker_positions": list(self.marker_positions),
            "source_span": self.source_span.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CorpusInstance":
        try:
            return cls(
                id=data["id"],
                tokens=tuple(data["tokens"]),
                marker_positions=tuple(int(p) for p in data["marker_positions"]),
                source_span=SourceSpan.from_dict(data["source_span"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed instance record: {exc}") from exc


def load_corpus(
    path: str | Path, format: str = "plain", source_id: str | None = None
) -> TokenStream:
    """Read a tokenised source text as one stream.

    format "plain": whitespace-delimited tokens. format "lines": one token
    per line (blank lines skipped). Empty files yield an empty stream.
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    if format == "plain":
        tokens = tuple(text.split())
    elif format == "lines":
        tokens = tuple(line.strip() for line in text.splitlines() if line.strip())
    else:
        raise DataError(f"unknown corpus format {format!r} (expected plain or lines)")
    return TokenStream(source_id=source_id or p.stem, tokens=tokens)


def extract_instances(
    stream: TokenStream,
    marker: str | Iterable[str],
    width: int = DEFAULT_WIDTH,
) -> list[CorpusInstance]:
    """One window per marker occurrence, deduplicated on identical windows.

    Window placement: start at max(0, k - left) for occurrence index k,
    where left = (width - 1) // 2, then extend to width tokens, clipping at
    the right edge and back-filling leftwards if clipped. Occurrences close
    to a boundary can yield the same window; later duplicates are dropped.
    Instance ids are "<source_id>:<window start>", unique because equal
    starts imply equal windows.
    """
    if not 1 <= width <= MAX_WIDTH:
        raise DataError(f"window width must be 1..{MAX_WIDTH}, got {width}")
    lexemes = (marker,) if isinstance(marker, str) else tuple(marker)
    markers = {m.casefold() for m in lexemes}
    if not markers or "" in markers:
        raise DataError("need at least one non-empty marker lexeme")
    tokens = stream.tokens
    n = len(tokens)
    left = (width - 1) // 2
    occurrences = [k for k, tok in enumerate(tokens) if tok.casefold() in markers]
    out: list[CorpusInstance] = []
    seen: set[tuple[int, int]] = set()
    for k in occurrences:
        start = max(0, k - left)
        end = min(n, start + width)
        start = max(0, end - width)
        if (start, end) in seen:
            continue
        seen.add((start, end))
        window = tokens[start:end]
        positions = tuple(i - start for i in occurrences if start <= i < end)
        out.append(
            CorpusInstance(
                id=f"{stream.source_id}:{start}",
                tokens=window,
                marker_positions=positions,
                source_span=SourceSpan(stream.source_id, start, end),
            )
        )
    return out


def write_instances(instances: Iterable[CorpusInstance], path: str | Path) -> int:
    """Write instances as JSON Lines. Field order is fixed, so equal inputs
    produce byte-identical files."""
    count = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False, separators=(", ", ": ")))
            fh.write("\n")
            count += 1
    return count


def iter_instance_records(path: str | Path) -> Iterator[CorpusInstance]:
    try:
        fh = Path(path).open("r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read instances {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                yield CorpusInstance.from_dict(data)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc


def read_instances(path: str | Path) -> list[CorpusInstance]:
    instances = list(iter_instance_records(path))
    ids = [i.id for i in instances]
    if len(set(ids)) != len(ids):
        dupe = next(i for i in ids if ids.count(i) > 1)
        raise DataError(f"{path}: duplicate instance id {dupe!r}")
    return instances

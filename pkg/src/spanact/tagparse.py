"""Turn raw chat-model responses into validated, token-aligned annotations.

The pipeline has four stages, each usable on its own:

    extract_payload   response text -> (verdict, tagged text)
    parse_tags        tagged text   -> ParsedOutput (tokens + raw spans)
    align             output tokens -> AlignmentResult against the instance
    to_annotation     ParsedOutput + AlignmentResult -> Annotation | ParseFailure

Models reflow text (fuse clitics, drop or add punctuation, re-quote), so
raw spans live over the model's own tokens and are projected back to the
source instance through an alignment. Anything that cannot be projected
confidently becomes a ParseFailure and is routed to human review, never
silently guessed.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Optional, Sequence

from .corpus import CorpusInstance
from .errors import UsageError
from .scheme import Annotation, AnnotationScheme, TagSpan, validate_annotation

ACT = "ACT"
NO_ACT = "NO_ACT"
UNPARSEABLE = "UNPARSEABLE"

DEFAULT_MIN_COVERAGE = 0.9

# "The annotated version is:" plus observed drift such as a bare numbered
# "Annotated version:". The last occurrence wins; chat models restate.
_ANSWER_MARKER_RE = re.compile(
    r"(?:the\s+)?annotated\s+version(?:\s+is)?\s*:", re.IGNORECASE
)
_TAG_TOKEN_RE = re.compile(r"</?[A-Z][A-Z_]*>")
_TAG_PAIR_RE = re.compile(r"<([A-Z][A-Z_]*)>.*?</\1>")


@dataclass(frozen=True)
class ParsedOutput:
    """Tokenised model output with spans over those output tokens."""

    verdict: str
    output_tokens: tuple[str, ...] = ()
    raw_spans: tuple[TagSpan, ...] = ()
    diagnostics: tuple[str, ...] = ()


@dataclass(frozen=True)
class AlignmentResult:
    """Per-output-token projection onto source-token index ranges.

    mapping[i] is a half-open (start, end) range of source tokens, or None
    (a gap) when output token i has no source counterpart. A fused output
    token such as "I'm" can map to the two source tokens "I" and "'m".
    coverage is the fraction of source tokens reached by any mapping entry.
    """

    mapping: tuple[Optional[tuple[int, int]], ...]
    coverage: float


@dataclass(frozen=True)
class ParseFailure:
    """A response that could not become a trustworthy annotation."""

    instance_id: str
    reason: str
    coverage: Optional[float] = None
    diagnostics: tuple[str, ...] = ()


def no_act_sentence(act_name: str, utterance_text: str) -> str:
    """The canonical act-absent answer sentence."""
    return f'No speech act of {act_name} is present in the utterance "{utterance_text}".'


def _no_act_re(act_name: str) -> re.Pattern[str]:
    return re.compile(
        rf"no\s+speech\s+act\s+of\s+{re.escape(act_name)}\s+is\s+present", re.IGNORECASE
    )


def extract_payload(response_text: str, act_name: str = "apology") -> tuple[str, str]:
    """Locate the answer inside a chatty response.

    Returns (verdict, tagged_text). Precedence: an act-absent sentence wins;
    then text after the last annotated-version marker; then the longest line
    containing a well-formed tag pair; otherwise UNPARSEABLE. The tagged
    text is stripped of surrounding whitespace and one layer of wrapping
    double quotes (models often quote the annotated sentence back).
    """
    if _no_act_re(act_name).search(response_text):
        return NO_ACT, ""
    matches = list(_ANSWER_MARKER_RE.finditer(response_text))
    if matches:
        payload = response_text[matches[-1].end() :]
        # The answer ends at the next blank line if the model kept talking.
        payload = payload.split("\n\n", 1)[0]
        return ACT, _strip_wrapping(payload)
    candidates = [line for line in response_text.splitlines() if _TAG_PAIR_RE.search(line)]
    if candidates:
        return ACT, _strip_wrapping(max(candidates, key=len))
    return UNPARSEABLE, ""


def _strip_wrapping(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        text = text[1:-1].strip()
    return text


def parse_tags(tagged_text: str, scheme: AnnotationScheme) -> ParsedOutput:
    """Convert <NAME> ... </NAME> mark-up into spans over the untagged tokens.

    Tags may abut words without spaces; both forms parse identically because
    tag tokens are space-padded before tokenisation. Unknown tag names,
    unbalanced, nested, or empty tag pairs make the whole text UNPARSEABLE:
    a confused model output belongs in the review queue, not half-parsed.
    """
    spaced = _TAG_TOKEN_RE.sub(lambda m: f" {m.group(0)} ", tagged_text)
    out_tokens: list[str] = []
    spans: list[TagSpan] = []
    open_tag: Optional[tuple[str, int]] = None
    for tok in spaced.split():
        m = _TAG_TOKEN_RE.fullmatch(tok)
        if not m:
            out_tokens.append(tok)
            continue
        closing = tok.startswith("</")
        name = tok[2:-1] if closing else tok[1:-1]
        if not scheme.has_tag(name):
            return ParsedOutput(UNPARSEABLE, diagnostics=(f"unknown tag {name!r}",))
        if closing:
            if open_tag is None or open_tag[0] != name:
                return ParsedOutput(
                    UNPARSEABLE, diagnostics=(f"unbalanced closing tag </{name}>",)
                )
            start = open_tag[1]
            if len(out_tokens) == start:
                return ParsedOutput(UNPARSEABLE, diagnostics=(f"empty tag pair <{name}>",))
            spans.append(TagSpan(name, start, len(out_tokens)))
            open_tag = None
        else:
            if open_tag is not None:
                return ParsedOutput(
                    UNPARSEABLE,
                    diagnostics=(f"nested tag <{name}> inside <{open_tag[0]}>",),
                )
            open_tag = (name, len(out_tokens))
    if open_tag is not None:
        return ParsedOutput(UNPARSEABLE, diagnostics=(f"unclosed tag <{open_tag[0]}>",))
    if not spans:
        return ParsedOutput(UNPARSEABLE, diagnostics=("no tag pairs found",))
    return ParsedOutput(ACT, tuple(out_tokens), tuple(spans))


def _fold(token: str) -> str:
    return unicodedata.normalize("NFKC", token).casefold()


def _strip_punct(folded: str) -> str:
    chars = list(folded)
    while chars and unicodedata.category(chars[0]).startswith("P"):
        chars.pop(0)
    while chars and unicodedata.category(chars[-1]).startswith("P"):
        chars.pop()
    return "".join(chars)


def _alnum(folded: str) -> str:
    return "".join(ch for ch in folded if ch.isalnum())


def _tokens_match(a: str, b: str) -> bool:
    fa, fb = _fold(a), _fold(b)
    if fa == fb:
        return True
    sa, sb = _strip_punct(fa), _strip_punct(fb)
    return bool(sa) and sa == sb


def align(output_tokens: Sequence[str], instance_tokens: Sequence[str]) -> AlignmentResult:
    """Two-pass alignment of model output onto the source instance.

    Pass 1 is a longest-common-subsequence over normalised tokens (NFKC,
    casefold, surrounding punctuation stripped). Pass 2 revisits each
    unmatched region: if the region's alphanumeric characters are identical
    on both sides, output tokens are mapped to the source tokens covering
    the same character range, which resolves clitic fusion ("I'm" vs
    "I 'm") and re-attached punctuation.
    """
    n, m = len(output_tokens), len(instance_tokens)
    if n == 0 or m == 0:
        raise UsageError("align requires non-empty token lists")
    dp = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, nxt = dp[i], dp[i + 1]
        for j in range(m - 1, -1, -1):
            if _tokens_match(output_tokens[i], instance_tokens[j]):
                row[j] = nxt[j + 1] + 1
            else:
                row[j] = max(nxt[j], row[j + 1])
    anchors: list[tuple[int, int]] = []
    i = j = 0
    while i < n and j < m:
        if (
            _tokens_match(output_tokens[i], instance_tokens[j])
            and dp[i][j] == dp[i + 1][j + 1] + 1
        ):
            anchors.append((i, j))
            i += 1
            j += 1
        elif dp[i + 1][j] >= dp[i][j + 1]:
            i += 1
        else:
            j += 1
    mapping: list[Optional[tuple[int, int]]] = [None] * n
    for oi, si in anchors:
        mapping[oi] = (si, si + 1)
    bounds = [(-1, -1)] + anchors + [(n, m)]
    for (i1, j1), (i2, j2) in zip(bounds, bounds[1:]):
        _char_pass(output_tokens, instance_tokens, mapping, i1 + 1, i2, j1 + 1, j2)
    covered: set[int] = set()
    for rng in mapping:
        if rng is not None:
            covered.update(range(rng[0], rng[1]))
    return AlignmentResult(tuple(mapping), len(covered) / m)


def _char_pass(
    out_tokens: Sequence[str],
    src_tokens: Sequence[str],
    mapping: list[Optional[tuple[int, int]]],
    o_lo: int,
    o_hi: int,
    s_lo: int,
    s_hi: int,
) -> None:
    """Map an unmatched region by character identity, mutating mapping."""
    if o_lo >= o_hi or s_lo >= s_hi:
        return
    out_alnum = [_alnum(_fold(t)) for t in out_tokens[o_lo:o_hi]]
    src_alnum = [_alnum(_fold(t)) for t in src_tokens[s_lo:s_hi]]
    if "".join(out_alnum) != "".join(src_alnum) or not any(out_alnum):
        return
    # Character start offsets of each source token in the concatenation.
    src_starts: list[tuple[int, int, int]] = []  # (char_lo, char_hi, src_index)
    pos = 0
    for k, chunk in enumerate(src_alnum):
        if chunk:
            src_starts.append((pos, pos + len(chunk), s_lo + k))
            pos += len(chunk)
    pos = 0
    for k, chunk in enumerate(out_alnum):
        if not chunk:
            continue
        lo, hi = pos, pos + len(chunk)
        pos = hi
        touched = [si for (c_lo, c_hi, si) in src_starts if c_lo < hi and c_hi > lo]
        if touched:
            mapping[o_lo + k] = (touched[0], touched[-1] + 1)


def to_annotation(
    parsed: ParsedOutput,
    alignment: Optional[AlignmentResult],
    instance: CorpusInstance,
    scheme: AnnotationScheme,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
    provenance: str = "gold",
    warnings: Optional[list[str]] = None,
) -> Annotation | ParseFailure:
    """Project parsed spans back onto the source instance.

    A span's projection is the minimal source range covering its mapped
    output tokens; spans that project to nothing are dropped (noted in
    warnings, if a list is supplied). Low coverage, post-projection overlap,
    or invariant violations give a ParseFailure instead of an Annotation.
    """
    if parsed.verdict == UNPARSEABLE:
        raise UsageError("to_annotation called on an UNPARSEABLE parse")
    if parsed.verdict == NO_ACT:
        return Annotation(instance.id, act_present=False, spans=(), provenance=provenance)
    if alignment is None:
        raise UsageError("ACT verdict requires an alignment")
    if alignment.coverage < min_coverage:
        return ParseFailure(
            instance.id,
            "low-coverage",
            coverage=alignment.coverage,
            diagnostics=(f"alignment coverage {alignment.coverage:.2f} < {min_coverage:.2f}",),
        )
    projected: list[TagSpan] = []
    for span in parsed.raw_spans:
        ranges = [alignment.mapping[i] for i in range(span.start, span.end)]
        ranges = [r for r in ranges if r is not None]
        if not ranges:
            if warnings is not None:
                warnings.append(f"span {span.tag}({span.start},{span.end}) projects to nothing; dropped")
            continue
        projected.append(TagSpan(span.tag, min(r[0] for r in ranges), max(r[1] for r in ranges)))
    ordered = sorted(projected, key=lambda s: (s.start, s.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            return ParseFailure(
                instance.id,
                "overlapping-projection",
                coverage=alignment.coverage,
                diagnostics=(
                    f"{prev.tag}({prev.start},{prev.end}) overlaps {cur.tag}({cur.start},{cur.end}) after projection",
                ),
            )
    annotation = Annotation(
        instance.id, act_present=True, spans=tuple(ordered), provenance=provenance
    )
    violations = validate_annotation(annotation, scheme, instance)
    if violations:
        return ParseFailure(
            instance.id,
            "invalid-annotation",
            coverage=alignment.coverage,
            diagnostics=tuple(str(v) for v in violations),
        )
    return annotation


def render_tagged_text(
    annotation: Annotation, instance: CorpusInstance, scheme: AnnotationScheme
) -> str:
    """The inverse of the parse pipeline, used for round-trips and gold authoring.

    Act-present annotations render as tokens joined by single spaces with
    open/close tags as their own space-delimited tokens; act-absent ones
    render as the canonical act-absent sentence.
    """
    if annotation.instance_id != instance.id:
        raise UsageError(
            f"annotation {annotation.instance_id!r} rendered against instance {instance.id!r}"
        )
    if not annotation.act_present:
        return no_act_sentence(scheme.act_name, instance.text)
    pieces: list[str] = []
    pos = 0
    for span in sorted(annotation.spans, key=lambda s: s.start):
        pieces.extend(instance.tokens[pos : span.start])
        pieces.append(f"<{span.tag}>")
        pieces.extend(instance.tokens[span.start : span.end])
        pieces.append(f"</{span.tag}>")
        pos = span.end
    pieces.extend(instance.tokens[pos:])
    return " ".join(pieces)


@dataclass(frozen=True)
class ResponseOutcome:
    """Everything a pipeline needs to record about one parsed response."""

    instance_id: str
    annotation: Optional[Annotation]
    failure: Optional[ParseFailure]
    coverage: Optional[float]
    diagnostics: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return self.annotation is not None


def process_response(
    response_text: str,
    instance: CorpusInstance,
    scheme: AnnotationScheme,
    min_coverage: float = DEFAULT_MIN_COVERAGE,
    provenance: str = "gold",
) -> ResponseOutcome:
    """Run the full extract -> parse -> align -> project pipeline."""
    verdict, payload = extract_payload(response_text, act_name=scheme.act_name)
    if verdict == UNPARSEABLE:
        failure = ParseFailure(
            instance.id, "no-answer-pattern", diagnostics=("response matches no answer shape",)
        )
        return ResponseOutcome(instance.id, None, failure, None, failure.diagnostics)
    if verdict == NO_ACT:
        ann = Annotation(instance.id, act_present=False, spans=(), provenance=provenance)
        return ResponseOutcome(instance.id, ann, None, None, ())
    parsed = parse_tags(payload, scheme)
    if parsed.verdict == UNPARSEABLE:
        failure = ParseFailure(instance.id, "bad-markup", diagnostics=parsed.diagnostics)
        return ResponseOutcome(instance.id, None, failure, None, failure.diagnostics)
    alignment = align(parsed.output_tokens, instance.tokens)
    warnings: list[str] = []
    result = to_annotation(
        parsed,
        alignment,
        instance,
        scheme,
        min_coverage=min_coverage,
        provenance=provenance,
        warnings=warnings,
    )
    if isinstance(result, ParseFailure):
        return ResponseOutcome(
            instance.id, None, result, alignment.coverage, tuple(warnings) + result.diagnostics
        )
    return ResponseOutcome(instance.id, result, None, alignment.coverage, tuple(warnings))

/** The reviewer's working copy of one instance's annotation.
 *
 * Spans obey the same invariants as a stored annotation — known tag,
 * 0 <= start < end <= token count, pairwise non-overlapping (half-open, so
 * touching spans are fine) — and every mutator enforces them: a violating
 * edit is rejected with a reason and leaves the buffer unchanged. Toggling
 * to no-act clears the span set.
 */

export interface Span {
  tag: string;
  start: number;
  end: number;
}

export interface BufferState {
  actPresent: boolean;
  spans: Span[];
}

export type EditResult = { ok: true } | { ok: false; reason: string };

const ok: EditResult = { ok: true };

function rejected(reason: string): EditResult {
  return { ok: false, reason };
}

function sortSpans(spans: Span[]): Span[] {
  return [...spans].sort((a, b) => a.start - b.start || a.end - b.end);
}

function fingerprint(state: BufferState): string {
  const spans = sortSpans(state.spans).map((s) => [s.tag, s.start, s.end]);
  return JSON.stringify([state.actPresent, spans]);
}

export class EditBuffer {
  readonly tagNames: ReadonlySet<string>;
  private actPresentFlag: boolean;
  private spanSet: Span[];
  private readonly baseline: string;

  /** seed: the state the reviewer starts editing from (latest verdict when
   * one exists, else the prediction). baseline: the state "untouched" is
   * measured against for the dirty flag — by default the seed, but when a
   * prior verdict seeds the buffer the caller passes the prediction here so
   * that dirty keeps meaning "differs from the first-pass prediction". */
  constructor(
    readonly tokenCount: number,
    tagNames: Iterable<string>,
    seed: BufferState,
    baseline: BufferState = seed
  ) {
    this.tagNames = new Set(tagNames);
    this.actPresentFlag = seed.actPresent;
    this.spanSet = sortSpans(seed.spans.map((s) => ({ ...s })));
    this.baseline = fingerprint(baseline);
  }

  get actPresent(): boolean {
    return this.actPresentFlag;
  }

  /** Spans, always sorted by (start, end). */
  get spans(): readonly Span[] {
    return this.spanSet;
  }

  /** True once the working state differs from the seeded prediction. */
  get dirty(): boolean {
    return this.fingerprintNow() !== this.baseline;
  }

  state(): BufferState {
    return {
      actPresent: this.actPresentFlag,
      spans: this.spanSet.map((s) => ({ ...s })),
    };
  }

  /** Add a span; rejects unknown tags, out-of-range bounds, and overlaps. */
  addSpan(tag: string, start: number, end: number): EditResult {
    if (!this.tagNames.has(tag)) {
      return rejected(`unknown tag ${tag}`);
    }
    if (!Number.isInteger(start) || !Number.isInteger(end)) {
      return rejected("span bounds must be integers");
    }
    if (start < 0 || end <= start) {
      return rejected(`bad span bounds (${start}, ${end})`);
    }
    if (end > this.tokenCount) {
      return rejected(
        `span (${start}, ${end}) exceeds ${this.tokenCount} tokens`
      );
    }
    const clash = this.spanSet.find((s) => start < s.end && s.start < end);
    if (clash) {
      return rejected(
        `overlaps ${clash.tag} (${clash.start}, ${clash.end})`
      );
    }
    this.spanSet = sortSpans([...this.spanSet, { tag, start, end }]);
    this.actPresentFlag = true;
    return ok;
  }

  /** Remove the span covering the given token index. */
  deleteSpanAt(tokenIndex: number): EditResult {
    const index = this.spanSet.findIndex(
      (s) => s.start <= tokenIndex && tokenIndex < s.end
    );
    if (index < 0) {
      return rejected(`no span covers token ${tokenIndex}`);
    }
    this.spanSet = this.spanSet.filter((_, i) => i !== index);
    return ok;
  }

  /** Remove an exact span. */
  deleteSpan(span: Span): EditResult {
    const index = this.spanSet.findIndex(
      (s) => s.tag === span.tag && s.start === span.start && s.end === span.end
    );
    if (index < 0) {
      return rejected(
        `no such span ${span.tag} (${span.start}, ${span.end})`
      );
    }
    this.spanSet = this.spanSet.filter((_, i) => i !== index);
    return ok;
  }

  /** Flip act presence. Marking no-act clears every span; flipping back to
   * act-present starts from an empty span set (the cleared spans are gone). */
  toggleNoAct(): EditResult {
    if (this.actPresentFlag) {
      this.actPresentFlag = false;
      this.spanSet = [];
    } else {
      this.actPresentFlag = true;
    }
    return ok;
  }

  private fingerprintNow(): string {
    return fingerprint({ actPresent: this.actPresentFlag, spans: this.spanSet });
  }
}

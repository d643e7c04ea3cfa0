import { describe, expect, it } from "vitest";

import { EditBuffer, type BufferState } from "../src/editbuffer.js";

const TAGS = ["APOLOGISING", "REASON", "APOLOGISER", "APOLOGISEE", "INTENSIFIER"];

function buffer(
  seed: BufferState = { actPresent: true, spans: [] },
  tokenCount = 10,
  baseline?: BufferState
): EditBuffer {
  return new EditBuffer(tokenCount, TAGS, seed, baseline);
}

describe("EditBuffer invariants", () => {
  it("adds a valid span and keeps the set sorted", () => {
    const b = buffer({
      actPresent: true,
      spans: [{ tag: "REASON", start: 5, end: 8 }],
    });
    const result = b.addSpan("APOLOGISING", 1, 2);
    expect(result.ok).toBe(true);
    expect(b.spans).toEqual([
      { tag: "APOLOGISING", start: 1, end: 2 },
      { tag: "REASON", start: 5, end: 8 },
    ]);
  });

  it("select tokens 5-7 plus a tag key yields REASON(5,8)", () => {
    const b = buffer();
    // inclusive token selection 5..7 is the half-open range (5, 8)
    expect(b.addSpan("REASON", 5, 8)).toEqual({ ok: true });
    expect(b.spans).toEqual([{ tag: "REASON", start: 5, end: 8 }]);
  });

  it("rejects an overlapping span and leaves the buffer unchanged", () => {
    const seed: BufferState = {
      actPresent: true,
      spans: [{ tag: "REASON", start: 3, end: 6 }],
    };
    const b = buffer(seed);
    const before = b.state();
    const result = b.addSpan("APOLOGISEE", 5, 7);
    expect(result.ok).toBe(false);
    if (!result.ok) {
      expect(result.reason).toContain("overlaps REASON (3, 6)");
    }
    expect(b.state()).toEqual(before);
    expect(b.dirty).toBe(false);
  });

  it("allows touching spans (half-open, shared boundary)", () => {
    const b = buffer({
      actPresent: true,
      spans: [{ tag: "APOLOGISING", start: 2, end: 4 }],
    });
    expect(b.addSpan("REASON", 4, 6).ok).toBe(true);
    expect(b.addSpan("APOLOGISER", 0, 2).ok).toBe(true);
    expect(b.spans.map((s) => s.tag)).toEqual([
      "APOLOGISER",
      "APOLOGISING",
      "REASON",
    ]);
  });

  it("rejects out-of-range, inverted, and unknown-tag spans", () => {
    const b = buffer();
    expect(b.addSpan("REASON", 8, 11).ok).toBe(false); // beyond 10 tokens
    expect(b.addSpan("REASON", -1, 2).ok).toBe(false);
    expect(b.addSpan("REASON", 4, 4).ok).toBe(false);
    expect(b.addSpan("REASON", 5, 3).ok).toBe(false);
    expect(b.addSpan("BOGUS", 0, 1).ok).toBe(false);
    expect(b.addSpan("REASON", 0.5, 2).ok).toBe(false);
    expect(b.spans).toEqual([]);
    expect(b.dirty).toBe(false);
  });

  it("accepts a span ending exactly at the token count", () => {
    const b = buffer();
    expect(b.addSpan("REASON", 8, 10).ok).toBe(true);
  });

  it("toggling no-act clears all spans; toggling back starts empty", () => {
    const b = buffer({
      actPresent: true,
      spans: [
        { tag: "APOLOGISING", start: 0, end: 1 },
        { tag: "REASON", start: 1, end: 3 },
        { tag: "APOLOGISEE", start: 4, end: 5 },
      ],
    });
    expect(b.toggleNoAct()).toEqual({ ok: true });
    expect(b.actPresent).toBe(false);
    expect(b.spans).toEqual([]);
    expect(b.toggleNoAct()).toEqual({ ok: true });
    expect(b.actPresent).toBe(true);
    expect(b.spans).toEqual([]);
    expect(b.dirty).toBe(true);
  });

  it("adding a span to a no-act buffer re-asserts the act", () => {
    const b = buffer({ actPresent: false, spans: [] });
    expect(b.addSpan("APOLOGISING", 0, 1).ok).toBe(true);
    expect(b.actPresent).toBe(true);
  });

  it("deletes by covering token and by exact span", () => {
    const b = buffer({
      actPresent: true,
      spans: [
        { tag: "APOLOGISING", start: 0, end: 1 },
        { tag: "REASON", start: 2, end: 5 },
      ],
    });
    expect(b.deleteSpanAt(3)).toEqual({ ok: true });
    expect(b.spans).toEqual([{ tag: "APOLOGISING", start: 0, end: 1 }]);
    expect(b.deleteSpanAt(7).ok).toBe(false);
    expect(b.deleteSpan({ tag: "APOLOGISING", start: 0, end: 1 })).toEqual({
      ok: true,
    });
    expect(b.deleteSpan({ tag: "REASON", start: 2, end: 5 }).ok).toBe(false);
    expect(b.spans).toEqual([]);
  });

  it("tracks dirty against the seed and recognises a return to it", () => {
    const seed: BufferState = {
      actPresent: true,
      spans: [{ tag: "APOLOGISING", start: 1, end: 2 }],
    };
    const b = buffer(seed);
    expect(b.dirty).toBe(false);
    b.addSpan("REASON", 4, 6);
    expect(b.dirty).toBe(true);
    b.deleteSpan({ tag: "REASON", start: 4, end: 6 });
    expect(b.dirty).toBe(false);
  });

  it("measures dirty against an explicit baseline when seeded from a verdict", () => {
    const prediction: BufferState = {
      actPresent: true,
      spans: [{ tag: "APOLOGISING", start: 1, end: 2 }],
    };
    const verdictState: BufferState = { actPresent: false, spans: [] };
    const b = buffer(verdictState, 10, prediction);
    // untouched buffer shows the stored verdict, but it differs from the
    // prediction, so submitting would not be an ACCEPT
    expect(b.actPresent).toBe(false);
    expect(b.dirty).toBe(true);
  });

  it("span order never depends on insertion order", () => {
    const b = buffer();
    b.addSpan("REASON", 6, 9);
    b.addSpan("APOLOGISING", 0, 1);
    b.addSpan("APOLOGISEE", 2, 4);
    expect(b.spans.map((s) => s.start)).toEqual([0, 2, 6]);
  });
});

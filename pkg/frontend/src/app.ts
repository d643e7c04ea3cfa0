/** The review session controller.
 *
 * Owns all UI state — queue, current instance, edit buffer, metrics — and
 * exposes the reviewer's actions as methods; the DOM layer is a thin shell
 * that renders snapshots and forwards events here. Keyboard-first: every
 * action is reachable through pressKey. At most one verdict submission is
 * in flight at a time, and the queue only advances after the service has
 * acknowledged the verdict.
 */

import { ApiError, PreflightError, type ReviewApi } from "./api.js";
import { EditBuffer, type BufferState, type Span } from "./editbuffer.js";
import { buildPalette, paletteByKey, type PaletteEntry } from "./palette.js";
import type {
  InstanceDetailResponse,
  MetricsResponse,
  QueueItemWire,
  RunManifestWire,
  SchemeWire,
  TranscriptWire,
  VerdictRequest,
  VerdictWire,
} from "./schemas.js";

export type Phase = "idle" | "loading" | "error" | "ready";
export type QueueFilter = "pending" | "reviewed" | "failed";

export interface Banner {
  kind: "error" | "info";
  text: string;
  violations: readonly string[];
}

export interface Selection {
  start: number;
  end: number;
}

export interface InstanceViewModel {
  instanceId: string;
  tokens: readonly string[];
  markerPositions: readonly number[];
  predictionStatus: string | null;
  coverage: number | null;
  diagnostics: readonly string[];
  predictedActPresent: boolean | null;
  predictedSpans: readonly Span[];
  latestVerdict: VerdictWire | null;
  transcript: TranscriptWire | null;
  reviewed: boolean;
}

export interface AppSnapshot {
  phase: Phase;
  errorMessage: string | null;
  runId: string;
  filter: QueueFilter | null;
  manifest: RunManifestWire | null;
  integrityWarnings: readonly string[];
  palette: readonly PaletteEntry[];
  queue: readonly QueueItemWire[];
  queueTotal: number;
  position: number;
  view: InstanceViewModel | null;
  buffer: EditBuffer | null;
  selection: Selection | null;
  metrics: MetricsResponse | null;
  banner: Banner | null;
  busy: boolean;
  showTranscript: boolean;
}

export interface ReviewAppOptions {
  runId: string;
  reviewerId: string;
  filter?: QueueFilter | null;
  pageSize?: number;
  onChange?: (snapshot: AppSnapshot) => void;
}

export class ReviewApp {
  private readonly api: ReviewApi;
  private readonly runId: string;
  private readonly reviewerId: string;
  private readonly filter: QueueFilter | null;
  private readonly pageSize: number;
  private readonly onChange: ((snapshot: AppSnapshot) => void) | undefined;

  private phase: Phase = "idle";
  private errorMessage: string | null = null;
  private manifest: RunManifestWire | null = null;
  private scheme: SchemeWire | null = null;
  private integrityWarnings: readonly string[] = [];
  private palette: PaletteEntry[] = [];
  private keymap = new Map<string, PaletteEntry>();
  private queue: QueueItemWire[] = [];
  private queueTotal = 0;
  private position = -1;
  private view: InstanceViewModel | null = null;
  private buffer: EditBuffer | null = null;
  private selection: Selection | null = null;
  private metrics: MetricsResponse | null = null;
  private banner: Banner | null = null;
  private busy = false;
  private showTranscript = false; // hidden by default to avoid anchoring

  constructor(api: ReviewApi, options: ReviewAppOptions) {
    this.api = api;
    this.runId = options.runId;
    this.reviewerId = options.reviewerId;
    this.filter = options.filter ?? null;
    this.pageSize = options.pageSize ?? 50;
    this.onChange = options.onChange;
  }

  // -------------------------------------------------------------- lifecycle

  /** Load the run, the first queue page, initial metrics, and the first
   * instance. Any failure lands in the error phase; retry() runs it again. */
  async start(): Promise<void> {
    this.phase = "loading";
    this.errorMessage = null;
    this.banner = null;
    this.emit();
    try {
      const run = await this.api.getRun(this.runId);
      this.manifest = run.manifest;
      this.scheme = run.scheme;
      this.integrityWarnings = run.integrity_warnings;
      this.palette = buildPalette(run.scheme);
      this.keymap = paletteByKey(this.palette);
      const page = await this.api.listInstances(this.runId, {
        ...(this.filter !== null ? { status: this.filter } : {}),
        offset: 0,
        limit: this.pageSize,
      });
      this.queue = [...page.items];
      this.queueTotal = page.total;
      this.metrics = await this.api.getMetrics(this.runId);
      this.phase = "ready";
      this.position = -1;
      this.view = null;
      this.buffer = null;
      if (this.queue.length > 0) {
        await this.openIndex(0);
      } else {
        this.emit();
      }
    } catch (cause) {
      this.phase = "error";
      this.errorMessage = describe(cause);
      this.emit();
    }
  }

  async retry(): Promise<void> {
    await this.start();
  }

  /** Fetch the next queue page and append it. No-op once fully loaded. */
  async loadMore(): Promise<void> {
    if (this.phase !== "ready" || this.queue.length >= this.queueTotal) return;
    const page = await this.api.listInstances(this.runId, {
      ...(this.filter !== null ? { status: this.filter } : {}),
      offset: this.queue.length,
      limit: this.pageSize,
    });
    this.queue = [...this.queue, ...page.items];
    this.queueTotal = page.total;
    this.emit();
  }

  // ------------------------------------------------------------- navigation

  async openIndex(index: number): Promise<void> {
    if (this.phase !== "ready") return;
    const item = this.queue[index];
    if (!item) return;
    try {
      const detail = await this.api.getInstance(this.runId, item.instance_id);
      this.position = index;
      this.view = toViewModel(detail, item);
      this.buffer = seedBuffer(detail, this.tagNames());
      this.selection = null;
      this.banner = null;
      this.showTranscript = false;
      this.emit();
    } catch (cause) {
      this.setBanner("error", describe(cause), violationsOf(cause));
    }
  }

  async next(): Promise<void> {
    await this.openIndex(this.position + 1);
  }

  async prev(): Promise<void> {
    await this.openIndex(this.position - 1);
  }

  /** Advance to the next unreviewed instance, loading further pages as
   * needed and wrapping around once; stays put when everything is done. */
  async openNextPending(): Promise<void> {
    if (this.phase !== "ready") return;
    let i = this.position + 1;
    for (;;) {
      while (i >= this.queue.length && this.queue.length < this.queueTotal) {
        await this.loadMore();
      }
      if (i >= this.queue.length) break;
      if (!this.queue[i]!.reviewed) {
        await this.openIndex(i);
        return;
      }
      i += 1;
    }
    for (let j = 0; j <= this.position && j < this.queue.length; j++) {
      if (!this.queue[j]!.reviewed) {
        await this.openIndex(j);
        return;
      }
    }
    this.setBanner("info", "all instances reviewed", []);
  }

  hasPending(): boolean {
    return this.queue.some((item) => !item.reviewed);
  }

  // ---------------------------------------------------------------- editing

  selectTokens(start: number, end: number): void {
    if (!this.view) return;
    const n = this.view.tokens.length;
    const lo = Math.max(0, Math.min(start, end));
    const hi = Math.min(n, Math.max(start, end));
    if (lo >= hi) return;
    this.selection = { start: lo, end: hi };
    this.emit();
  }

  clearSelection(): void {
    this.selection = null;
    this.banner = null;
    this.emit();
  }

  /** Apply a tag to the selected token range. A violating edit (overlap,
   * out of range, unknown tag) is rejected: the buffer is untouched and the
   * reason is surfaced inline. */
  applyTag(tagName: string): void {
    if (!this.buffer) return;
    if (!this.selection) {
      this.setBanner("error", "select a token range first", []);
      return;
    }
    const result = this.buffer.addSpan(
      tagName,
      this.selection.start,
      this.selection.end
    );
    if (!result.ok) {
      this.setBanner("error", `edit rejected: ${result.reason}`, []);
      return;
    }
    this.selection = null;
    this.banner = null;
    this.emit();
  }

  deleteSpan(span: Span): void {
    if (!this.buffer) return;
    const result = this.buffer.deleteSpan(span);
    if (!result.ok) {
      this.setBanner("error", `edit rejected: ${result.reason}`, []);
      return;
    }
    this.banner = null;
    this.emit();
  }

  /** Delete the span under the selection anchor. */
  deleteSelectedSpan(): void {
    if (!this.buffer) return;
    if (!this.selection) {
      this.setBanner("error", "select a token inside the span to delete", []);
      return;
    }
    const result = this.buffer.deleteSpanAt(this.selection.start);
    if (!result.ok) {
      this.setBanner("error", `edit rejected: ${result.reason}`, []);
      return;
    }
    this.selection = null;
    this.banner = null;
    this.emit();
  }

  toggleNoAct(): void {
    if (!this.buffer) return;
    this.buffer.toggleNoAct();
    this.selection = null;
    this.banner = null;
    this.emit();
  }

  toggleTranscript(): void {
    this.showTranscript = !this.showTranscript;
    this.emit();
  }

  // ------------------------------------------------------------- submission

  /** Post the verdict for the current buffer: ACCEPT when untouched,
   * MARK_NO_ACT when the act flag is off, CORRECT otherwise. On success the
   * metrics panel refreshes and the queue advances to the next pending
   * instance; a rejection is displayed and nothing advances. */
  async submit(): Promise<void> {
    if (this.phase !== "ready" || !this.view || !this.buffer) return;
    if (this.busy) return; // one in-flight submission at most
    const body = this.verdictBody();
    this.busy = true;
    this.emit();
    try {
      const verdict = await this.api.submitVerdict(
        this.runId,
        this.view.instanceId,
        body
      );
      this.markReviewed(this.view.instanceId, verdict);
      this.busy = false;
      await this.refreshMetrics();
      await this.openNextPending();
    } catch (cause) {
      this.busy = false;
      this.setBanner("error", describe(cause), violationsOf(cause));
    }
  }

  /** The request body submit() would send for the current buffer. */
  verdictBody(): VerdictRequest {
    const buffer = this.buffer;
    if (!buffer) throw new Error("no instance loaded");
    if (!buffer.dirty) {
      return { reviewer_id: this.reviewerId, action: "ACCEPT" };
    }
    if (!buffer.actPresent) {
      return { reviewer_id: this.reviewerId, action: "MARK_NO_ACT" };
    }
    return {
      reviewer_id: this.reviewerId,
      action: "CORRECT",
      act_present: true,
      spans: buffer.spans.map((s) => ({ ...s })),
    };
  }

  async refreshMetrics(): Promise<void> {
    try {
      this.metrics = await this.api.getMetrics(this.runId);
      this.emit();
    } catch (cause) {
      this.setBanner("error", describe(cause), []);
    }
  }

  // --------------------------------------------------------------- keyboard

  /** Keyboard dispatch: tag keys from the palette, Enter submit, n no-act,
   * x/Delete delete span, j/k or arrows next/prev, p next pending,
   * t transcript, r retry, Escape clear. */
  async pressKey(key: string): Promise<void> {
    if (this.phase === "error") {
      if (key === "r") await this.retry();
      return;
    }
    const entry = this.keymap.get(key);
    if (entry) {
      this.applyTag(entry.name);
      return;
    }
    switch (key) {
      case "Enter":
        await this.submit();
        break;
      case "n":
        this.toggleNoAct();
        break;
      case "x":
      case "Delete":
      case "Backspace":
        this.deleteSelectedSpan();
        break;
      case "j":
      case "ArrowRight":
        await this.next();
        break;
      case "k":
      case "ArrowLeft":
        await this.prev();
        break;
      case "p":
        await this.openNextPending();
        break;
      case "t":
        this.toggleTranscript();
        break;
      case "Escape":
        this.clearSelection();
        break;
      default:
        break;
    }
  }

  // ---------------------------------------------------------------- reading

  snapshot(): AppSnapshot {
    return {
      phase: this.phase,
      errorMessage: this.errorMessage,
      runId: this.runId,
      filter: this.filter,
      manifest: this.manifest,
      integrityWarnings: this.integrityWarnings,
      palette: this.palette,
      queue: this.queue,
      queueTotal: this.queueTotal,
      position: this.position,
      view: this.view,
      buffer: this.buffer,
      selection: this.selection,
      metrics: this.metrics,
      banner: this.banner,
      busy: this.busy,
      showTranscript: this.showTranscript,
    };
  }

  // --------------------------------------------------------------- internal

  private tagNames(): string[] {
    return this.scheme ? this.scheme.tags.map((t) => t.name) : [];
  }

  private markReviewed(instanceId: string, verdict: VerdictWire): void {
    this.queue = this.queue.map((item) =>
      item.instance_id === instanceId ? { ...item, reviewed: true } : item
    );
    if (this.view && this.view.instanceId === instanceId) {
      this.view = { ...this.view, reviewed: true, latestVerdict: verdict };
    }
  }

  private setBanner(
    kind: Banner["kind"],
    text: string,
    violations: readonly string[]
  ): void {
    this.banner = { kind, text, violations };
    this.emit();
  }

  private emit(): void {
    this.onChange?.(this.snapshot());
  }
}

// ----------------------------------------------------------------- helpers

function toViewModel(
  detail: InstanceDetailResponse,
  item: QueueItemWire
): InstanceViewModel {
  const annotation = detail.prediction?.annotation ?? null;
  return {
    instanceId: detail.instance.id,
    tokens: detail.instance.tokens,
    markerPositions: detail.instance.marker_positions,
    predictionStatus: detail.prediction?.status ?? null,
    coverage: detail.prediction?.coverage ?? null,
    diagnostics: detail.prediction?.diagnostics ?? [],
    predictedActPresent: annotation ? annotation.act_present : null,
    predictedSpans: annotation ? annotation.spans.map((s) => ({ ...s })) : [],
    latestVerdict: detail.latest_verdict,
    transcript: detail.transcript,
    reviewed: item.reviewed,
  };
}

/** Seed the edit buffer from the latest verdict when one exists (so a
 * reload shows the reviewer's stored decision), else from the prediction.
 * The dirty baseline is always the prediction, because an untouched buffer
 * means "the prediction is right" — i.e. ACCEPT. */
function seedBuffer(
  detail: InstanceDetailResponse,
  tagNames: string[]
): EditBuffer {
  const tokenCount = detail.instance.tokens.length;
  const annotation = detail.prediction?.annotation ?? null;
  const predictionState: BufferState = annotation
    ? {
        actPresent: annotation.act_present,
        spans: annotation.spans.map((s) => ({ ...s })),
      }
    : { actPresent: true, spans: [] };
  const verdict = detail.latest_verdict;
  let seed = predictionState;
  if (verdict) {
    if (verdict.action === "MARK_NO_ACT") {
      seed = { actPresent: false, spans: [] };
    } else if (verdict.action === "CORRECT") {
      seed = {
        actPresent: verdict.act_present ?? true,
        spans: (verdict.spans ?? []).map((s) => ({ ...s })),
      };
    }
    // ACCEPT: the stored decision is the prediction itself.
  }
  return new EditBuffer(tokenCount, tagNames, seed, predictionState);
}

function describe(cause: unknown): string {
  if (cause instanceof ApiError || cause instanceof PreflightError) {
    return cause.message;
  }
  return cause instanceof Error ? cause.message : String(cause);
}

function violationsOf(cause: unknown): readonly string[] {
  return cause instanceof ApiError ? cause.violations : [];
}

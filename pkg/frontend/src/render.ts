/** Pure HTML renderers for the review screen.
 *
 * Every function maps state to a markup string with no document access, so
 * the full presentation layer is testable in Node; main.ts owns the DOM.
 */

import type { AppSnapshot, InstanceViewModel, Selection } from "./app.js";
import type { Span } from "./editbuffer.js";
import { paletteByName, type PaletteEntry } from "./palette.js";
import type { MetricsResponse, QueueItemWire } from "./schemas.js";

const UNDEFINED_GLYPH = "—";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/** Tokens with span highlights. Each span wraps its tokens in one
 * contiguous <mark> carrying the tag's color; selected tokens get a
 * .selected class; marker tokens a .marker class. Every token element
 * carries data-i with its index so the DOM layer can map clicks back. */
export function renderTokens(
  tokens: readonly string[],
  spans: readonly Span[],
  palette: readonly PaletteEntry[],
  selection: Selection | null,
  markerPositions: readonly number[] = []
): string {
  const colors = paletteByName([...palette]);
  const markers = new Set(markerPositions);
  const starts = new Map<number, Span>();
  const ends = new Set<number>();
  for (const span of spans) {
    starts.set(span.start, span);
    ends.add(span.end);
  }
  const parts: string[] = [];
  for (let i = 0; i < tokens.length; i++) {
    if (ends.has(i)) parts.push("</mark>");
    const opening = starts.get(i);
    if (opening) {
      const color = colors.get(opening.tag)?.color ?? "#dddddd";
      parts.push(
        `<mark class="span" data-tag="${escapeHtml(opening.tag)}" ` +
          `data-start="${opening.start}" data-end="${opening.end}" ` +
          `style="background:${color}">` +
          `<span class="taglabel">${escapeHtml(opening.tag)}</span>`
      );
    }
    const classes = ["tok"];
    if (markers.has(i)) classes.push("marker");
    if (selection && selection.start <= i && i < selection.end) {
      classes.push("selected");
    }
    parts.push(
      `<span class="${classes.join(" ")}" data-i="${i}">${escapeHtml(
        tokens[i] ?? ""
      )}</span>`
    );
  }
  if (ends.has(tokens.length)) parts.push("</mark>");
  return `<div class="tokens">${parts.join(" ")}</div>`;
}

export function renderPalette(palette: readonly PaletteEntry[]): string {
  const chips = palette
    .map(
      (entry) =>
        `<span class="chip" data-tag="${escapeHtml(entry.name)}" ` +
        `style="background:${entry.color}" title="${escapeHtml(entry.definition)}">` +
        `<kbd>${escapeHtml(entry.key)}</kbd> ${escapeHtml(entry.name)}` +
        `${entry.isIfid ? " *" : ""}</span>`
    )
    .join("");
  return `<div class="palette">${chips}</div>`;
}

export function renderMetrics(metrics: MetricsResponse | null): string {
  if (!metrics) {
    return `<div class="metrics empty">no metrics yet</div>`;
  }
  const { report, progress } = metrics;
  const pct = (value: number | null): string =>
    value === null ? UNDEFINED_GLYPH : (value * 100).toFixed(2);
  const rows = report.rows
    .map(
      (row) =>
        `<tr><td>${escapeHtml(row.category)}</td>` +
        `<td>${row.tp}</td><td>${row.fp}</td><td>${row.fn}</td>` +
        `<td>${pct(row.precision)}</td><td>${pct(row.recall)}</td>` +
        `<td>${pct(row.f1)}</td></tr>`
    )
    .join("");
  const accuracy =
    report.instance_accuracy === null
      ? UNDEFINED_GLYPH
      : `${(report.instance_accuracy * 100).toFixed(2)}%`;
  return (
    `<div class="metrics">` +
    `<div class="progress">reviewed ${progress.reviewed}/${progress.total}` +
    ` · pending ${progress.pending} · failed ${progress.failed}` +
    ` · scored ${progress.scored}</div>` +
    `<div class="accuracy">instance accuracy: ${accuracy}` +
    ` (${report.n_correct}/${report.n_instances})</div>` +
    `<table><thead><tr><th>category</th><th>TP</th><th>FP</th><th>FN</th>` +
    `<th>P%</th><th>R%</th><th>F1%</th></tr></thead>` +
    `<tbody>${rows}</tbody></table></div>`
  );
}

export function renderQueue(
  queue: readonly QueueItemWire[],
  position: number
): string {
  const items = queue
    .map((item, i) => {
      const classes = ["item"];
      if (i === position) classes.push("current");
      if (item.reviewed) classes.push("reviewed");
      const failed = item.status !== "OK";
      if (failed) classes.push("failed");
      const coverage =
        item.coverage === null ? "" : ` · cov ${item.coverage.toFixed(2)}`;
      return (
        `<li class="${classes.join(" ")}" data-index="${i}">` +
        `<span class="qid">${escapeHtml(item.instance_id)}</span>` +
        `<span class="qstatus">${escapeHtml(item.status)}${coverage}` +
        `${item.reviewed ? " ✓" : ""}</span></li>`
      );
    })
    .join("");
  return `<ol class="queue">${items}</ol>`;
}

export function renderBanner(snapshot: AppSnapshot): string {
  const banner = snapshot.banner;
  if (!banner) return "";
  const violations =
    banner.violations.length > 0
      ? `<ul>${banner.violations
          .map((v) => `<li>${escapeHtml(v)}</li>`)
          .join("")}</ul>`
      : "";
  return (
    `<div class="banner ${banner.kind}">${escapeHtml(banner.text)}` +
    `${violations}</div>`
  );
}

export function renderTranscript(view: InstanceViewModel, show: boolean): string {
  if (!view.transcript) return "";
  if (!show) {
    return `<details class="transcript"><summary>model transcript (hidden to avoid anchoring — press t)</summary></details>`;
  }
  const turns = view.transcript.turns
    .map(
      (turn) =>
        `<div class="turn ${escapeHtml(turn.role)}"><b>${escapeHtml(
          turn.role
        )}</b> ${escapeHtml(turn.text)}</div>`
    )
    .join("");
  return `<div class="transcript open">${turns}</div>`;
}

export function renderStatusLine(view: InstanceViewModel): string {
  const coverage =
    view.coverage === null ? "" : ` · coverage ${view.coverage.toFixed(2)}`;
  const diagnostics =
    view.diagnostics.length > 0
      ? ` · ${view.diagnostics.map(escapeHtml).join("; ")}`
      : "";
  const verdict = view.latestVerdict
    ? ` · last verdict: ${escapeHtml(view.latestVerdict.action)} by ${escapeHtml(
        view.latestVerdict.reviewer_id
      )}`
    : "";
  return (
    `<div class="statusline">` +
    `<b>${escapeHtml(view.instanceId)}</b>` +
    ` · prediction: ${escapeHtml(view.predictionStatus ?? "missing")}` +
    `${coverage}${diagnostics}${verdict}</div>`
  );
}

export function renderApp(snapshot: AppSnapshot): string {
  if (snapshot.phase === "loading" || snapshot.phase === "idle") {
    return `<div class="screen loading">loading run ${escapeHtml(
      snapshot.runId
    )}…</div>`;
  }
  if (snapshot.phase === "error") {
    return (
      `<div class="screen error"><p>could not reach the review service:</p>` +
      `<pre>${escapeHtml(snapshot.errorMessage ?? "unknown error")}</pre>` +
      `<button data-action="retry">retry (r)</button></div>`
    );
  }
  const warnings =
    snapshot.integrityWarnings.length > 0
      ? `<div class="banner error">integrity: ${snapshot.integrityWarnings
          .map(escapeHtml)
          .join("; ")}</div>`
      : "";
  if (!snapshot.view || !snapshot.buffer) {
    return (
      `<div class="screen empty">${warnings}` +
      `<p>no instances match this filter.</p>${renderMetrics(
        snapshot.metrics
      )}</div>`
    );
  }
  const buffer = snapshot.buffer;
  const noAct = !buffer.actPresent;
  return (
    `<div class="screen ready">${warnings}` +
    renderBanner(snapshot) +
    `<main>` +
    renderStatusLine(snapshot.view) +
    `<div class="actflag">${
      noAct ? "NO ACT (press n to undo)" : "act present"
    }${buffer.dirty ? " · edited" : ""}</div>` +
    renderTokens(
      snapshot.view.tokens,
      buffer.spans,
      snapshot.palette,
      snapshot.selection,
      snapshot.view.markerPositions
    ) +
    renderPalette(snapshot.palette) +
    `<div class="controls">` +
    `<button data-action="submit">${
      buffer.dirty ? (noAct ? "mark no-act" : "submit correction") : "accept"
    } (Enter)</button>` +
    `<button data-action="noact">toggle no-act (n)</button>` +
    `<button data-action="delete">delete span (x)</button>` +
    `<button data-action="prev">prev (k)</button>` +
    `<button data-action="next">next (j)</button>` +
    `</div>` +
    renderTranscript(snapshot.view, snapshot.showTranscript) +
    `</main>` +
    `<aside>` +
    renderMetrics(snapshot.metrics) +
    renderQueue(snapshot.queue, snapshot.position) +
    `</aside>` +
    `</div>`
  );
}

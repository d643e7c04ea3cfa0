/** Browser entry point: binds the controller to the document.
 *
 * All state and behavior live in ReviewApp; this file only renders
 * snapshots into #app and forwards DOM events (keyboard, token drag
 * selection, clicks) to controller methods.
 */

import { ApiClient } from "./api.js";
import { ReviewApp } from "./app.js";
import { renderApp } from "./render.js";

function pickRunId(): string | null {
  return new URLSearchParams(window.location.search).get("run");
}

function reviewerId(): string {
  const stored = window.localStorage.getItem("reviewer_id");
  if (stored) return stored;
  const entered = window.prompt("reviewer id:", "reviewer") || "reviewer";
  window.localStorage.setItem("reviewer_id", entered);
  return entered;
}

async function boot(): Promise<void> {
  const mount = document.getElementById("app");
  if (!mount) throw new Error("missing #app mount point");
  const client = new ApiClient("");

  let runId = pickRunId();
  if (!runId) {
    try {
      const runs = await client.listRuns();
      runId = runs.runs[0]?.run_id ?? null;
    } catch {
      runId = null;
    }
  }
  if (!runId) {
    mount.innerHTML =
      `<div class="screen empty"><p>no runs in the store. ` +
      `annotate a corpus first, then reload.</p></div>`;
    return;
  }

  const app = new ReviewApp(client, {
    runId,
    reviewerId: reviewerId(),
    onChange: (snapshot) => {
      mount.innerHTML = renderApp(snapshot);
    },
  });

  // Keyboard-first: everything routes through pressKey.
  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && ["INPUT", "TEXTAREA", "SELECT"].includes(target.tagName)) {
      return;
    }
    void app.pressKey(event.key);
  });

  // Token range selection by mouse: press on the first token, release on
  // the last. A plain click selects the single token under the cursor.
  let anchor: number | null = null;
  const tokenIndex = (target: EventTarget | null): number | null => {
    const el = (target as HTMLElement | null)?.closest?.("[data-i]");
    const raw = el?.getAttribute("data-i");
    return raw === null || raw === undefined ? null : Number(raw);
  };
  mount.addEventListener("mousedown", (event) => {
    anchor = tokenIndex(event.target);
  });
  mount.addEventListener("mouseup", (event) => {
    const release = tokenIndex(event.target);
    if (anchor !== null && release !== null) {
      const lo = Math.min(anchor, release);
      const hi = Math.max(anchor, release);
      app.selectTokens(lo, hi + 1);
    }
    anchor = null;
  });

  // Clicks on rendered controls and queue rows.
  mount.addEventListener("click", (event) => {
    const el = event.target as HTMLElement | null;
    if (!el) return;
    const actionEl = el.closest("[data-action]") as HTMLElement | null;
    if (actionEl) {
      switch (actionEl.getAttribute("data-action")) {
        case "submit":
          void app.submit();
          return;
        case "noact":
          app.toggleNoAct();
          return;
        case "delete":
          app.deleteSelectedSpan();
          return;
        case "next":
          void app.next();
          return;
        case "prev":
          void app.prev();
          return;
        case "retry":
          void app.retry();
          return;
      }
    }
    const chip = el.closest(".chip[data-tag]") as HTMLElement | null;
    if (chip) {
      app.applyTag(chip.getAttribute("data-tag") ?? "");
      return;
    }
    const mark = el.closest("mark.span") as HTMLElement | null;
    if (mark && mark.hasAttribute("data-start")) {
      app.deleteSpan({
        tag: mark.getAttribute("data-tag") ?? "",
        start: Number(mark.getAttribute("data-start")),
        end: Number(mark.getAttribute("data-end")),
      });
      return;
    }
    const row = el.closest("li.item[data-index]") as HTMLElement | null;
    if (row) {
      void app.openIndex(Number(row.getAttribute("data-index")));
    }
  });

  await app.start();
}

void boot();

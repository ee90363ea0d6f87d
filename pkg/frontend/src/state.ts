/** Studio state machine, DOM-free so it can be unit tested directly.
 *
 * One active generation per browser session: starting a run while another is
 * live is rejected. The preview buffer accumulates raw fenced-page fragments
 * and is cleared whenever a new run starts; follow-up controls unlock only
 * once a page is ready. */

import type { Phase, RunEvent } from "./events.js";

export interface RunFailure {
  reason: string;
  errorKind?: string;
  detail?: string;
  /** link target for the raw-output download affordance */
  rawArtifactUrl?: string;
}

export class StudioState {
  sessionId: string | null = null;
  runId: string | null = null;
  phase: Phase | "idle" = "idle";
  previewBuffer = "";
  finalPageId: string | null = null;
  style = "default";
  followUpDraft = "";
  failure: RunFailure | null = null;

  get runActive(): boolean {
    return this.runId !== null && this.phase !== "ready" && this.phase !== "failed";
  }

  /** Follow-ups need a ready page in the current session. */
  get followUpEnabled(): boolean {
    return this.finalPageId !== null && !this.runActive;
  }

  setStyle(style: string): void {
    if (this.runActive) throw new Error("cannot change style mid-run");
    this.style = style;
  }

  /** Record a newly accepted run; resets all per-run view state. */
  beginRun(runId: string, sessionId: string): void {
    if (this.runActive) throw new Error("a run is already in progress");
    this.runId = runId;
    this.sessionId = sessionId;
    this.phase = "queued";
    this.previewBuffer = "";
    this.failure = null;
    this.followUpDraft = "";
  }

  apply(event: RunEvent): void {
    if (this.runId === null) throw new Error("no active run");
    switch (event.kind) {
      case "phase":
        this.phase = event.payload.phase;
        break;
      case "preview":
        this.previewBuffer += event.payload;
        break;
      case "swap":
        this.finalPageId = event.payload.page_id;
        break;
      case "failed":
        this.failure = {
          reason: event.payload.reason,
          errorKind: event.payload.error_kind,
          detail: event.payload.detail,
        };
        break;
    }
  }

  /** URL of the document to render right now: the final page once swapped,
   * otherwise nothing (the shell renders previewBuffer into the sandbox). */
  pageUrl(): string | null {
    return this.finalPageId !== null && this.phase === "ready"
      ? `/page/${this.finalPageId}`
      : null;
  }
}

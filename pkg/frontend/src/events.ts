/** Wire types for the run event stream (NDJSON over GET /api/runs/{id}/events). */

export type Phase =
  | "queued"
  | "generating"
  | "extracting"
  | "postprocessing"
  | "ready"
  | "failed";

export interface PhaseEvent {
  seq: number;
  kind: "phase";
  payload: { phase: Phase; detail: string };
}

export interface PreviewEvent {
  seq: number;
  kind: "preview";
  payload: string;
}

export interface SwapEvent {
  seq: number;
  kind: "swap";
  payload: { page_id: string };
}

export interface FailedEvent {
  seq: number;
  kind: "failed";
  payload: { reason: string; error_kind?: string; detail?: string };
}

export type RunEvent = PhaseEvent | PreviewEvent | SwapEvent | FailedEvent;

export interface GenerateResponse {
  run_id: string;
  session_id: string;
}

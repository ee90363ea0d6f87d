/** Thin HTTP client over the gateway's public API. fetch is injected so the
 * core stays testable without a browser. */

import { NdjsonParser } from "./ndjson.js";
import type { GenerateResponse, RunEvent } from "./events.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
  body?: ReadableStream<Uint8Array> | null;
}>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private fetchImpl: FetchLike,
    private base = "",
  ) {}

  async generate(
    prompt: string,
    style: string,
    sessionId?: string | null,
  ): Promise<GenerateResponse> {
    const body: Record<string, string> = { prompt, style };
    if (sessionId) body.session_id = sessionId;
    const res = await this.fetchImpl(`${this.base}/api/generate`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as GenerateResponse;
  }

  /** Consume the run's NDJSON stream, invoking onEvent per decoded event. */
  async streamEvents(
    runId: string,
    onEvent: (event: RunEvent) => void,
  ): Promise<void> {
    const res = await this.fetchImpl(`${this.base}/api/runs/${runId}/events`);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    const parser = new NdjsonParser<RunEvent>();
    if (res.body) {
      const reader = res.body.getReader();
      const decoder = new TextDecoder();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const ev of parser.feed(decoder.decode(value, { stream: true }))) {
          onEvent(ev);
        }
      }
    } else {
      for (const ev of parser.feed(await res.text())) onEvent(ev);
    }
    for (const ev of parser.flush()) onEvent(ev);
  }

  async fetchArtifact(pageId: string): Promise<unknown | null> {
    const res = await this.fetchImpl(`${this.base}/api/pages/${pageId}/artifact`);
    if (res.status === 404) return null;
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return res.json();
  }

  async postRecord(record: Record<string, string>): Promise<{ duplicate: boolean }> {
    const res = await this.fetchImpl(`${this.base}/api/records`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(record),
    });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as { duplicate: boolean };
  }
}

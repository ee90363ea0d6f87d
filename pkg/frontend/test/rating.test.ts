import { describe, expect, it } from "vitest";
import { ApiClient, type FetchLike } from "../src/api.js";
import { RatingSession, type RatingTask } from "../src/rating.js";

function task(overrides: Partial<RatingTask> = {}): RatingTask {
  return {
    study: "s",
    promptId: "p1",
    promptText: "plan a picnic",
    leftPageId: "pgL",
    rightPageId: "pgR",
    leftArm: "expert",
    rightArm: "genui",
    rater: "r1",
    ...overrides,
  };
}

interface Recorded {
  url: string;
  body: Record<string, string>;
}

function apiWith(options: {
  missingPages?: string[];
  failFirstPost?: boolean;
  posted?: Recorded[];
}): ApiClient {
  const posted = options.posted ?? [];
  let postAttempts = 0;
  const impl: FetchLike = async (url, init) => {
    if (url.startsWith("/api/pages/")) {
      const pageId = url.split("/")[3];
      const missing = options.missingPages?.includes(pageId);
      return {
        ok: !missing,
        status: missing ? 404 : 200,
        json: async () => ({ id: pageId }),
        text: async () => "",
        body: null,
      };
    }
    if (url === "/api/records") {
      postAttempts += 1;
      if (options.failFirstPost && postAttempts === 1) {
        throw new Error("network down");
      }
      posted.push({ url, body: JSON.parse(init!.body!) });
      return {
        ok: true,
        status: 200,
        json: async () => ({ accepted: true, duplicate: false }),
        text: async () => "",
        body: null,
      };
    }
    throw new Error(`unexpected url ${url}`);
  };
  return new ApiClient(impl);
}

describe("RatingSession", () => {
  it("posts a neutral verdict as a full record", async () => {
    const posted: Recorded[] = [];
    const session = new RatingSession(apiWith({ posted }), [task()]);
    expect(await session.submit(0, "neutral")).toBe(true);
    expect(posted).toHaveLength(1);
    expect(posted[0].body).toMatchObject({
      study: "s",
      prompt_id: "p1",
      left: "expert",
      right: "genui",
      rater: "r1",
      verdict: "neutral",
    });
    expect(posted[0].body.idempotency_key).toBeTruthy();
  });

  it("double-click submits a single record", async () => {
    const posted: Recorded[] = [];
    const session = new RatingSession(apiWith({ posted }), [task()]);
    const [first, second] = await Promise.all([
      session.submit(0, "left"),
      session.submit(0, "left"),
    ]);
    expect([first, second].sort()).toEqual([false, true]);
    expect(posted).toHaveLength(1);
    expect(session.status(0)).toBe("done");
  });

  it("locks a task after a successful submit", async () => {
    const posted: Recorded[] = [];
    const session = new RatingSession(apiWith({ posted }), [task()]);
    await session.submit(0, "right");
    expect(await session.submit(0, "left")).toBe(false);
    expect(posted).toHaveLength(1);
  });

  it("network failure unlocks for retry with the same idempotency key", async () => {
    const posted: Recorded[] = [];
    const session = new RatingSession(
      apiWith({ posted, failFirstPost: true }),
      [task()],
    );
    await expect(session.submit(0, "left")).rejects.toThrow(/network down/);
    expect(session.status(0)).toBe("pending");
    expect(await session.submit(0, "left")).toBe(true);
    expect(posted).toHaveLength(1);
  });

  it("skips and reports tasks with missing artifacts", async () => {
    const session = new RatingSession(
      apiWith({ missingPages: ["pgR"] }),
      [task(), task({ promptId: "p2", leftPageId: "pgA", rightPageId: "pgB" })],
    );
    const { ready, skipped } = await session.prepare();
    expect(ready).toBe(1);
    expect(skipped).toEqual(["p1: missing artifact pgR"]);
    expect(session.status(0)).toBe("skipped");
    expect(await session.submit(0, "left")).toBe(false);
  });

  it("presentation never exposes arm identities", () => {
    const session = new RatingSession(apiWith({}), [task()]);
    const view = session.presentation(0);
    expect(view).toEqual({
      promptText: "plan a picnic",
      leftPageUrl: "/page/pgL",
      rightPageUrl: "/page/pgR",
      status: "pending",
    });
    const blob = JSON.stringify(view);
    expect(blob).not.toContain("expert");
    expect(blob).not.toContain("genui");
  });
});

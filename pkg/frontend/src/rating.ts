/** Blind side-by-side rating flow.
 *
 * Tasks carry the arm labels needed for the submitted record, but nothing in
 * this module ever surfaces them to the view layer: `presentation()` is the
 * only render-facing accessor and exposes prompt text and page URLs only.
 * Each task is submitted at most once: the idempotency key is fixed when the
 * task is created, so a double-click or a retry after a network failure
 * cannot produce a second record server-side either. */

import type { ApiClient } from "./api.js";

export type Verdict = "left" | "neutral" | "right";

export interface RatingTask {
  study: string;
  promptId: string;
  promptText: string;
  leftPageId: string;
  rightPageId: string;
  /** arm labels, for the record only; never rendered */
  leftArm: string;
  rightArm: string;
  rater: string;
}

export type TaskStatus = "pending" | "submitting" | "done" | "skipped";

interface TaskState {
  task: RatingTask;
  status: TaskStatus;
  idempotencyKey: string;
  verdict?: Verdict;
  skipReason?: string;
}

/** What the shell is allowed to see of a task. */
export interface TaskPresentation {
  promptText: string;
  leftPageUrl: string;
  rightPageUrl: string;
  status: TaskStatus;
}

export class RatingSession {
  private tasks: TaskState[] = [];

  constructor(
    private api: ApiClient,
    tasks: RatingTask[],
    keyFor: (t: RatingTask) => string = defaultKey,
  ) {
    this.tasks = tasks.map((task) => ({
      task,
      status: "pending",
      idempotencyKey: keyFor(task),
    }));
  }

  get length(): number {
    return this.tasks.length;
  }

  status(index: number): TaskStatus | undefined {
    return this.tasks[index]?.status;
  }

  presentation(index: number): TaskPresentation {
    const state = this.tasks[index];
    if (!state) throw new Error(`no task ${index}`);
    return {
      promptText: state.task.promptText,
      leftPageUrl: `/page/${state.task.leftPageId}`,
      rightPageUrl: `/page/${state.task.rightPageId}`,
      status: state.status,
    };
  }

  /** Rating works over pre-cached artifacts only: verify both pages exist
   * before presenting a task; missing ones are skipped and reported. */
  async prepare(): Promise<{ ready: number; skipped: string[] }> {
    const skipped: string[] = [];
    for (const state of this.tasks) {
      const [left, right] = await Promise.all([
        this.api.fetchArtifact(state.task.leftPageId),
        this.api.fetchArtifact(state.task.rightPageId),
      ]);
      if (left === null || right === null) {
        state.status = "skipped";
        state.skipReason = left === null
          ? `missing artifact ${state.task.leftPageId}`
          : `missing artifact ${state.task.rightPageId}`;
        skipped.push(`${state.task.promptId}: ${state.skipReason}`);
      }
    }
    return {
      ready: this.tasks.filter((t) => t.status === "pending").length,
      skipped,
    };
  }

  /** Submit a verdict. Returns false when the task is locked (already done,
   * in flight, or skipped). A network failure unlocks the task for retry;
   * the unchanged idempotency key keeps the retry duplicate-safe. */
  async submit(index: number, verdict: Verdict): Promise<boolean> {
    const state = this.tasks[index];
    if (!state || state.status !== "pending") return false;
    state.status = "submitting";
    try {
      await this.api.postRecord({
        study: state.task.study,
        prompt_id: state.task.promptId,
        left: state.task.leftArm,
        right: state.task.rightArm,
        rater: state.task.rater,
        verdict,
        idempotency_key: state.idempotencyKey,
      });
    } catch (err) {
      state.status = "pending";
      throw err;
    }
    state.status = "done";
    state.verdict = verdict;
    return true;
  }
}

function defaultKey(t: RatingTask): string {
  return `${t.study}|${t.promptId}|${t.leftPageId}|${t.rightPageId}|${t.rater}`;
}

/** Task queue state machine: load pending tasks, submit, advance.
 *
 * The server is the source of truth. A failed submission keeps the
 * current task in place and surfaces the error; nothing is dropped
 * client-side.
 */

import { ApiClient, TaskDetail, Verdict } from "./api.js";

export type QueueStatus = "idle" | "loading" | "annotating" | "done" | "error";

export interface QueueState {
  status: QueueStatus;
  current: TaskDetail | null;
  index: number;
  total: number;
  remaining: number;
  lastError: string | null;
}

export class TaskQueue {
  private pending: string[] = [];
  private state: QueueState = {
    status: "idle",
    current: null,
    index: 0,
    total: 0,
    remaining: 0,
    lastError: null,
  };

  constructor(private readonly api: ApiClient) {}

  snapshot(): QueueState {
    return { ...this.state };
  }

  /** Fetch the pending queue; already-done tasks are skipped. */
  async load(): Promise<QueueState> {
    this.state = { ...this.state, status: "loading", lastError: null };
    try {
      const tasks = await this.api.listTasks();
      this.pending = tasks.filter((t) => !t.done).map((t) => t.task_id);
      this.state.total = tasks.length;
      this.state.index = tasks.length - this.pending.length;
      await this.advance();
    } catch (err) {
      this.state = {
        ...this.state,
        status: "error",
        lastError: String(err),
      };
    }
    return this.snapshot();
  }

  private async advance(): Promise<void> {
    this.state.remaining = this.pending.length;
    if (this.pending.length === 0) {
      this.state = { ...this.state, status: "done", current: null };
      return;
    }
    const next = await this.api.getTask(this.pending[0]);
    this.state = { ...this.state, status: "annotating", current: next };
  }

  /** Submit a verdict for the displayed task. On failure the task stays. */
  async submit(value: Verdict): Promise<QueueState> {
    if (this.state.status !== "annotating" || this.state.current === null) {
      throw new Error("no task displayed");
    }
    const taskId = this.state.current.task_id;
    try {
      await this.api.submitVerdict(taskId, value);
    } catch (err) {
      this.state = { ...this.state, lastError: String(err) };
      return this.snapshot();
    }
    this.pending = this.pending.filter((id) => id !== taskId);
    this.state.index += 1;
    this.state.lastError = null;
    await this.advance();
    return this.snapshot();
  }
}

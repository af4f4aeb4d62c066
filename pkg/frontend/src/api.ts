/** Typed client for the annotation service JSON API. */

export type Verdict = "yes" | "no" | "no_answer" | "not_sure";

export const VERDICTS: readonly Verdict[] = [
  "yes",
  "no",
  "no_answer",
  "not_sure",
];

export interface Bootstrap {
  baseUrl: string;
  annotator: string;
}

export interface TaskSummary {
  task_id: string;
  question_id: string;
  done: boolean;
  verdict: Verdict | null;
}

export interface RawPost {
  post_number: number;
  author: string;
  body: string;
}

export interface TaskDetail {
  task_id: string;
  question_id: string;
  question: string;
  voted_answer: string | null;
  original_answers: string[];
  raw_posts: RawPost[];
  assigned_to: string;
}

export interface AgreementReport {
  verdicts_total: number;
  coverage_pct: number;
  pct_yes: number;
  pct_no: number;
  pct_no_answer: number;
  pct_not_sure: number;
  complete_pairs: number;
  decided_pairs: number;
  inter_annotator_agreement: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export function parseBootstrap(text: string): Bootstrap {
  const raw = JSON.parse(text);
  if (typeof raw.baseUrl !== "string" || typeof raw.annotator !== "string") {
    throw new Error("bootstrap config needs string baseUrl and annotator");
  }
  return { baseUrl: raw.baseUrl.replace(/\/+$/, ""), annotator: raw.annotator };
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return resp.statusText || "request failed";
  }
}

export class ApiClient {
  constructor(
    private readonly config: Bootstrap,
    private readonly fetchFn: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.config.baseUrl + path, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, await detailOf(resp));
    }
    return (await resp.json()) as T;
  }

  async listTasks(): Promise<TaskSummary[]> {
    const body = await this.request<{ tasks: TaskSummary[] }>(
      `/api/tasks?annotator=${encodeURIComponent(this.config.annotator)}`,
    );
    return body.tasks;
  }

  getTask(taskId: string): Promise<TaskDetail> {
    return this.request(`/api/task/${encodeURIComponent(taskId)}`);
  }

  async submitVerdict(taskId: string, value: Verdict): Promise<void> {
    await this.request("/api/verdict", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        task_id: taskId,
        annotator: this.config.annotator,
        value,
      }),
    });
  }

  getReport(): Promise<AgreementReport> {
    return this.request("/api/report");
  }
}

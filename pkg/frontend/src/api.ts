/** Typed client for the service's documented /api routes — nothing else. */

export interface JobView {
  job_id: string;
  kind: string;
  state: "queued" | "running" | "succeeded" | "failed";
  progress: number;
  log_tail: string[];
  result_path: string | null;
  params: Record<string, unknown>;
}

export interface ContextView {
  chunk_id: string;
  text: string;
  score: number;
  rank: number;
}

export interface AnswerResponse {
  answer: string;
  contexts: ContextView[];
}

export interface StrategyReport {
  metric: string;
  k: number;
  scores: Record<string, number>;
  chosen: string;
  mrr?: Record<string, number>;
}

export interface EvalReport {
  dataset_id: string;
  retrieval: StrategyReport | null;
  answers: { mode: string; accuracy: number; invalid_count: number };
  per_item: Array<Record<string, unknown>>;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const text = await resp.text();
  if (!resp.ok) {
    let detail = text;
    try {
      detail = JSON.parse(text).detail ?? text;
    } catch {
      /* non-JSON error body; keep raw text */
    }
    throw new ApiError(resp.status, String(detail));
  }
  return JSON.parse(text) as T;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  createJob(kind: string, params: Record<string, unknown> = {}): Promise<{ job_id: string }> {
    return request(`${this.base}/api/jobs`, {
      method: "POST",
      body: JSON.stringify({ kind, params }),
    });
  }

  getJob(jobId: string): Promise<JobView> {
    return request(`${this.base}/api/jobs/${jobId}`);
  }

  listJobs(): Promise<JobView[]> {
    return request(`${this.base}/api/jobs`);
  }

  getReport(jobId: string): Promise<EvalReport> {
    return request(`${this.base}/api/jobs/${jobId}/report`);
  }

  answer(question: string, n?: number): Promise<AnswerResponse> {
    const body: Record<string, unknown> = { question };
    if (n !== undefined) body.n = n;
    return request(`${this.base}/api/answer`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  strategy(): Promise<StrategyReport> {
    return request(`${this.base}/api/strategy`);
  }
}

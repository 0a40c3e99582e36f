import type { Job, StyleEntry, StylizeRequest, StylizeResponse } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const text = await resp.text();
  let body: unknown = null;
  try {
    body = text ? JSON.parse(text) : null;
  } catch {
    body = null;
  }
  if (!resp.ok) {
    const message =
      body && typeof body === "object" && "error" in body
        ? String((body as { error: unknown }).error)
        : `HTTP ${resp.status}`;
    throw new ApiError(resp.status, message);
  }
  return body as T;
}

/** Thin typed client over the stylization service (docs/api.md). */
export class StudioApi {
  constructor(private base: string) {}

  async health(): Promise<boolean> {
    try {
      const resp = await fetch(`${this.base}/healthz`);
      return resp.ok;
    } catch {
      return false;
    }
  }

  async listStyles(): Promise<StyleEntry[]> {
    const resp = await fetch(`${this.base}/styles`);
    const body = await asJson<{ styles: StyleEntry[] }>(resp);
    return body.styles;
  }

  async stylize(request: StylizeRequest): Promise<StylizeResponse> {
    const resp = await fetch(`${this.base}/stylize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    return asJson<StylizeResponse>(resp);
  }

  async addStyle(name: string, imageB64: string): Promise<{ job_id: string }> {
    const resp = await fetch(`${this.base}/styles`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ name, image: imageB64 }),
    });
    return asJson<{ job_id: string }>(resp);
  }

  async job(id: string): Promise<Job> {
    const resp = await fetch(`${this.base}/jobs/${id}`);
    return asJson<Job>(resp);
  }

  /** Poll a job at `intervalMs` until it reaches a terminal state. */
  async waitForJob(id: string, intervalMs = 1000, timeoutMs = 600_000): Promise<Job> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.job(id);
      if (job.state === "done" || job.state === "failed") return job;
      if (Date.now() > deadline) throw new ApiError(408, `job ${id} timed out`);
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }
}

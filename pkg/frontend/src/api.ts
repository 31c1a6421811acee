import type { FunnelDoc, JobInfo, SqlDoc } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Thin typed client over the job service HTTP API. */
export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await resp.text();
    if (!resp.ok) {
      let detail = body;
      try {
        detail = JSON.parse(body).detail ?? body;
      } catch {
        // non-JSON error body; use raw text
      }
      throw new ApiError(resp.status, String(detail));
    }
    return JSON.parse(body) as T;
  }

  submitJob(criteriaText: string, strategy: string): Promise<{ job_id: string }> {
    return this.request("/jobs", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ criteria_text: criteriaText, strategy }),
    });
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.request(`/jobs/${jobId}`);
  }

  getFunnel(jobId: string): Promise<FunnelDoc> {
    return this.request(`/jobs/${jobId}/funnel`);
  }

  getSql(jobId: string): Promise<SqlDoc> {
    return this.request(`/jobs/${jobId}/sql`);
  }

  async getCohortCsv(jobId: string): Promise<string> {
    const resp = await this.fetchFn(`${this.baseUrl}/jobs/${jobId}/cohort`);
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return resp.text();
  }
}

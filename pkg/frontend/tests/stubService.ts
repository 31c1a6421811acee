/** In-memory stub of the job service for frontend tests. */

import type { FunnelDoc, JobInfo, JobState, SqlDoc } from "../src/types.js";

export interface StubJob {
  /** states returned by successive GET /jobs/{id} calls; the last one repeats */
  states: JobState[];
  funnel: FunnelDoc;
  sql: SqlDoc;
  error?: string;
}

export function makeFunnel(counts: number[]): FunnelDoc {
  const steps = counts.map((count, i) => ({
    step_index: i,
    criterion_id: i === 0 ? "index" : `inc-${i}`,
    kind: (i === 0 ? "INDEX" : "INCLUSION") as FunnelDoc["steps"][number]["kind"],
    remaining_count: count,
    sql: `SELECT person_id FROM step_${i}`,
  }));
  return { steps, final_cohort_size: counts[counts.length - 1] ?? 0 };
}

export const EMPTY_SQL: SqlDoc = {
  generated: "SELECT person_id FROM x",
  resolved: "SELECT person_id FROM x",
  healing_attempts: [],
  mappings: [],
};

export class StubService {
  jobs = new Map<string, StubJob>();
  pollCounts = new Map<string, number>();
  submissions: { criteria_text: string; strategy: string }[] = [];
  private nextJobNumber = 1;
  onSubmitJob: StubJob = { states: ["DONE"], funnel: makeFunnel([10]), sql: EMPTY_SQL };

  fetch = async (url: string | URL | Request, init?: RequestInit): Promise<Response> => {
    const path = String(url);
    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (path.endsWith("/jobs") && init?.method === "POST") {
      const payload = JSON.parse(String(init.body));
      this.submissions.push(payload);
      const jobId = `job-${this.nextJobNumber++}`;
      this.jobs.set(jobId, { ...this.onSubmitJob });
      this.pollCounts.set(jobId, 0);
      return json(202, { job_id: jobId });
    }

    const funnelMatch = path.match(/\/jobs\/([^/]+)\/funnel$/);
    if (funnelMatch) {
      const job = this.jobs.get(funnelMatch[1]);
      if (!job) return json(404, { detail: "unknown job" });
      return json(200, job.funnel);
    }

    const sqlMatch = path.match(/\/jobs\/([^/]+)\/sql$/);
    if (sqlMatch) {
      const job = this.jobs.get(sqlMatch[1]);
      if (!job) return json(404, { detail: "unknown job" });
      return json(200, job.sql);
    }

    const jobMatch = path.match(/\/jobs\/([^/]+)$/);
    if (jobMatch) {
      const jobId = jobMatch[1];
      const job = this.jobs.get(jobId);
      if (!job) return json(404, { detail: "unknown job" });
      const polls = this.pollCounts.get(jobId) ?? 0;
      this.pollCounts.set(jobId, polls + 1);
      const state = job.states[Math.min(polls, job.states.length - 1)];
      const info: JobInfo = {
        job_id: jobId,
        state,
        strategy: "rag_ac",
        created_at: "2024-01-01T00:00:00",
        error: state === "FAILED" ? (job.error ?? "boom") : null,
        cohort_size: state === "DONE" ? job.funnel.final_cohort_size : null,
      };
      return json(200, info);
    }

    return json(404, { detail: `unstubbed path: ${path}` });
  };
}

import type { ApiClient } from "./api.js";
import type { JobInfo } from "./types.js";

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onUpdate?: (job: JobInfo) => void;
}

export interface PollHandle {
  done: Promise<JobInfo>;
  cancel: () => void;
}

/** Poll a job until DONE or FAILED; polling then stops permanently.
 *
 * Resolves with the terminal job record (FAILED included; the caller
 * decides how to surface the error). Rejects only on transport errors
 * or timeout.
 */
export function pollJob(client: ApiClient, jobId: string, options: PollOptions = {}): PollHandle {
  const interval = options.intervalMs ?? 1000;
  const timeout = options.timeoutMs ?? 10 * 60 * 1000;
  let cancelled = false;
  let timer: ReturnType<typeof setTimeout> | undefined;

  const done = new Promise<JobInfo>((resolve, reject) => {
    const startedAt = Date.now();
    const tick = async () => {
      if (cancelled) {
        reject(new Error("polling cancelled"));
        return;
      }
      let job: JobInfo;
      try {
        job = await client.getJob(jobId);
      } catch (err) {
        reject(err);
        return;
      }
      options.onUpdate?.(job);
      if (job.state === "DONE" || job.state === "FAILED") {
        resolve(job); // terminal: no further requests ever
        return;
      }
      if (Date.now() - startedAt > timeout) {
        reject(new Error(`job ${jobId} still ${job.state} after ${timeout}ms`));
        return;
      }
      timer = setTimeout(tick, interval);
    };
    tick();
  });

  return {
    done,
    cancel: () => {
      cancelled = true;
      if (timer !== undefined) clearTimeout(timer);
    },
  };
}

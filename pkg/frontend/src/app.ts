import { ApiClient } from "./api.js";
import { checkCriteria } from "./grammar.js";
import { renderFunnel } from "./funnelView.js";
import { renderMappings } from "./mappingsView.js";
import { pollJob, PollHandle, PollOptions } from "./poll.js";
import type { JobInfo } from "./types.js";

/** Page skeleton element ids the app binds to. */
export const ELEMENT_IDS = {
  editor: "criteria-editor",
  annotations: "grammar-annotations",
  strategy: "strategy-select",
  run: "run-button",
  status: "job-status",
  errorBanner: "error-banner",
  funnel: "funnel-view",
  previousFunnel: "previous-funnel-view",
  mappings: "mappings-view",
  sql: "generated-sql",
} as const;

export interface AppController {
  editAndRerun: () => Promise<string | null>;
  currentJobId: () => string | null;
  activePoll: () => PollHandle | null;
}

export function initApp(
  doc: Document,
  client: ApiClient,
  pollOptions: PollOptions = {},
): AppController {
  const byId = <T extends HTMLElement>(id: string): T => {
    const el = doc.getElementById(id);
    if (!el) throw new Error(`missing page element: ${id}`);
    return el as T;
  };

  const editor = byId<HTMLTextAreaElement>(ELEMENT_IDS.editor);
  const annotations = byId<HTMLElement>(ELEMENT_IDS.annotations);
  const strategySelect = byId<HTMLSelectElement>(ELEMENT_IDS.strategy);
  const runButton = byId<HTMLButtonElement>(ELEMENT_IDS.run);
  const status = byId<HTMLElement>(ELEMENT_IDS.status);
  const errorBanner = byId<HTMLElement>(ELEMENT_IDS.errorBanner);
  const funnelView = byId<HTMLElement>(ELEMENT_IDS.funnel);
  const previousFunnelView = byId<HTMLElement>(ELEMENT_IDS.previousFunnel);
  const mappingsView = byId<HTMLElement>(ELEMENT_IDS.mappings);
  const sqlView = byId<HTMLElement>(ELEMENT_IDS.sql);

  let currentJobId: string | null = null;
  let currentFunnelDoc: unknown = null;
  let poll: PollHandle | null = null;

  function showError(message: string | null): void {
    errorBanner.textContent = message ?? "";
    errorBanner.style.display = message ? "block" : "none";
  }

  function annotate(violations: { line: number; message: string }[]): void {
    annotations.textContent = "";
    for (const violation of violations) {
      const item = doc.createElement("div");
      item.className = "annotation";
      item.dataset.line = String(violation.line);
      item.textContent =
        violation.line > 0 ? `line ${violation.line}: ${violation.message}` : violation.message;
      annotations.appendChild(item);
    }
  }

  async function showOutputs(job: JobInfo): Promise<void> {
    const funnelDoc = await client.getFunnel(job.job_id);
    // keep the prior run's funnel for side-by-side comparison
    if (currentFunnelDoc !== null) {
      renderFunnel(previousFunnelView, currentFunnelDoc);
    }
    currentFunnelDoc = funnelDoc;
    renderFunnel(funnelView, funnelDoc);
    const sqlDoc = await client.getSql(job.job_id);
    sqlView.textContent = sqlDoc.resolved;
    renderMappings(mappingsView, sqlDoc.mappings);
  }

  async function editAndRerun(): Promise<string | null> {
    showError(null);
    const { violations } = checkCriteria(editor.value);
    if (violations.length > 0) {
      annotate(violations); // fail fast: nothing is submitted
      return null;
    }
    annotate([]);

    let jobId: string;
    try {
      const submitted = await client.submitJob(editor.value, strategySelect.value);
      jobId = submitted.job_id;
    } catch (err) {
      showError(`submission failed: ${(err as Error).message}`);
      return null;
    }
    currentJobId = jobId;
    status.textContent = `job ${jobId}: QUEUED`;

    poll?.cancel();
    poll = pollJob(client, jobId, {
      ...pollOptions,
      onUpdate: (job) => {
        status.textContent = `job ${job.job_id}: ${job.state}`;
        pollOptions.onUpdate?.(job);
      },
    });
    poll.done
      .then(async (job) => {
        if (job.state === "FAILED") {
          showError(job.error ?? "job failed");
          return;
        }
        await showOutputs(job);
      })
      .catch((err) => showError(`polling failed: ${(err as Error).message}`));
    return jobId;
  }

  runButton.addEventListener("click", () => {
    void editAndRerun();
  });

  return {
    editAndRerun,
    currentJobId: () => currentJobId,
    activePoll: () => poll,
  };
}

/** Browser entry point: bind to the live document and same-origin API
 * (or ?api=<base> override). */
export function start(): void {
  const params = new URLSearchParams(window.location.search);
  const client = new ApiClient(params.get("api") ?? "");
  initApp(document, client);
}

declare global {
  interface Window {
    __COHORTGEN_TEST__?: boolean;
  }
}

if (typeof window !== "undefined" && !window.__COHORTGEN_TEST__ && typeof document !== "undefined" && document.getElementById(ELEMENT_IDS.editor)) {
  start();
}

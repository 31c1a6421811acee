import type { FunnelDoc, FunnelStepDoc } from "./types.js";

/** Render an attrition funnel as horizontal bars, one per step.
 *
 * Counts and SQL are displayed exactly as the service returned them;
 * nothing is recomputed client-side. Selecting a bar reveals that
 * step's SQL. A malformed document renders an error banner and no bars.
 */

function validate(doc: unknown): FunnelDoc {
  const d = doc as FunnelDoc;
  if (!d || !Array.isArray(d.steps)) {
    throw new Error("funnel document has no steps array");
  }
  d.steps.forEach((step: FunnelStepDoc, i: number) => {
    if (typeof step.step_index !== "number" || typeof step.remaining_count !== "number") {
      throw new Error(`funnel step ${i} is missing step_index or remaining_count`);
    }
    if (typeof step.criterion_id !== "string" || typeof step.kind !== "string") {
      throw new Error(`funnel step ${i} is missing criterion_id or kind`);
    }
  });
  return d;
}

export function renderFunnel(container: HTMLElement, doc: unknown): void {
  container.textContent = "";
  let funnel: FunnelDoc;
  try {
    funnel = validate(doc);
  } catch (err) {
    const banner = document.createElement("div");
    banner.className = "error-banner";
    banner.textContent = `cannot render funnel: ${(err as Error).message}`;
    container.appendChild(banner);
    return;
  }

  const steps = [...funnel.steps].sort((a, b) => a.step_index - b.step_index);
  const top = Math.max(1, ...steps.map((s) => s.remaining_count));

  const list = document.createElement("div");
  list.className = "funnel";
  const sqlPanel = document.createElement("pre");
  sqlPanel.className = "sql-panel";
  sqlPanel.textContent = "select a step to see its SQL";

  for (const step of steps) {
    const row = document.createElement("div");
    row.className = `funnel-row kind-${step.kind.toLowerCase()}`;
    row.dataset.stepIndex = String(step.step_index);

    const label = document.createElement("span");
    label.className = "funnel-label";
    label.textContent = `${step.step_index} ${step.kind} ${step.criterion_id}`;

    const bar = document.createElement("div");
    bar.className = "funnel-bar";
    bar.style.width = `${Math.max(1, Math.round((100 * step.remaining_count) / top))}%`;

    const count = document.createElement("span");
    count.className = "funnel-count";
    count.textContent = String(step.remaining_count); // verbatim service value

    row.appendChild(label);
    row.appendChild(bar);
    row.appendChild(count);
    row.addEventListener("click", () => {
      list.querySelectorAll(".selected").forEach((el) => el.classList.remove("selected"));
      row.classList.add("selected");
      sqlPanel.textContent = step.sql || "(no SQL recorded for this step)";
    });
    list.appendChild(row);
  }

  const summary = document.createElement("div");
  summary.className = "funnel-summary";
  summary.textContent = `final cohort: ${funnel.final_cohort_size}`;

  container.appendChild(list);
  container.appendChild(summary);
  container.appendChild(sqlPanel);
}

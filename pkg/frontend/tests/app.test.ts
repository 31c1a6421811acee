import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { initApp } from "../src/app.js";
import { EMPTY_SQL, StubService, makeFunnel } from "./stubService.js";

const VALID_CRITERIA = `Index date: first diagnosis of hypertension
Inclusion:
- age at least 18
- at least one outpatient visit
Exclusion:
- no warfarin use
`;

const PAGE = `
  <textarea id="criteria-editor"></textarea>
  <div id="grammar-annotations"></div>
  <select id="strategy-select">
    <option value="zs">zs</option>
    <option value="rag_ac" selected>rag_ac</option>
  </select>
  <button id="run-button">Run</button>
  <span id="job-status"></span>
  <div id="error-banner" style="display:none"></div>
  <div id="funnel-view"></div>
  <div id="previous-funnel-view"></div>
  <div id="mappings-view"></div>
  <pre id="generated-sql"></pre>
`;

function setup(stub: StubService) {
  window.__COHORTGEN_TEST__ = true;
  document.body.innerHTML = PAGE;
  const client = new ApiClient("", stub.fetch as typeof fetch);
  const app = initApp(document, client, { intervalMs: 1 });
  const editor = document.getElementById("criteria-editor") as HTMLTextAreaElement;
  return { app, editor };
}

async function settle(ms = 30): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, ms));
}

describe("edit and rerun", () => {
  let stub: StubService;

  beforeEach(() => {
    stub = new StubService();
  });

  it("renders N+1 funnel bars with labels equal to the service counts", async () => {
    // 3 criteria -> index step + 3 criterion steps = 4 bars
    const counts = [120, 80, 44, 17];
    stub.onSubmitJob = { states: ["DONE"], funnel: makeFunnel(counts), sql: EMPTY_SQL };
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;

    const jobId = await app.editAndRerun();
    expect(jobId).toBe("job-1");
    await settle();

    const bars = document.querySelectorAll("#funnel-view .funnel-row");
    expect(bars).toHaveLength(counts.length);
    const shown = [...document.querySelectorAll("#funnel-view .funnel-count")].map(
      (el) => el.textContent,
    );
    expect(shown).toEqual(counts.map(String)); // verbatim, no recomputation
  });

  it("issues exactly one POST /jobs and polls the returned id", async () => {
    stub.onSubmitJob = { states: ["QUEUED", "GENERATING", "DONE"], funnel: makeFunnel([9, 4]), sql: EMPTY_SQL };
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;

    const jobId = await app.editAndRerun();
    await settle();

    expect(stub.submissions).toHaveLength(1); // exactly one POST
    expect(stub.submissions[0].strategy).toBe("rag_ac");
    expect(jobId).toBe("job-1");
    expect(stub.pollCounts.get("job-1")! >= 3).toBe(true); // polled through states
    expect(document.getElementById("job-status")!.textContent).toBe("job job-1: DONE");
  });

  it("rerunning an unchanged buffer starts a distinct new job", async () => {
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;
    const first = await app.editAndRerun();
    await settle();
    const second = await app.editAndRerun();
    await settle();
    expect(first).not.toBe(second);
    expect(stub.submissions).toHaveLength(2);
  });

  it("keeps the previous funnel for side-by-side comparison", async () => {
    stub.onSubmitJob = { states: ["DONE"], funnel: makeFunnel([50, 20]), sql: EMPTY_SQL };
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;
    await app.editAndRerun();
    await settle();

    stub.onSubmitJob = { states: ["DONE"], funnel: makeFunnel([50, 35]), sql: EMPTY_SQL };
    await app.editAndRerun();
    await settle();

    const current = [...document.querySelectorAll("#funnel-view .funnel-count")].map(
      (el) => el.textContent,
    );
    const previous = [...document.querySelectorAll("#previous-funnel-view .funnel-count")].map(
      (el) => el.textContent,
    );
    expect(current).toEqual(["50", "35"]);
    expect(previous).toEqual(["50", "20"]);
  });

  it("annotates grammar violations inline and submits nothing", async () => {
    const { app, editor } = setup(stub);
    editor.value = "";
    const jobId = await app.editAndRerun();
    expect(jobId).toBeNull();
    expect(stub.submissions).toHaveLength(0);
    expect(document.querySelectorAll("#grammar-annotations .annotation").length).toBeGreaterThan(0);
  });

  it("annotates the offending line number for mid-document violations", async () => {
    const { app, editor } = setup(stub);
    editor.value = "- stray\nIndex date: x\nInclusion:\n- ok\n";
    await app.editAndRerun();
    const annotation = document.querySelector<HTMLElement>("#grammar-annotations .annotation")!;
    expect(annotation.dataset.line).toBe("1");
    expect(stub.submissions).toHaveLength(0);
  });

  it("shows the service error in the banner for failed jobs", async () => {
    stub.onSubmitJob = {
      states: ["GENERATING", "FAILED"],
      funnel: makeFunnel([1]),
      sql: EMPTY_SQL,
      error: "HEALING: SQL still failing after 3 repair iterations",
    };
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;
    await app.editAndRerun();
    await settle();
    const banner = document.getElementById("error-banner")!;
    expect(banner.style.display).toBe("block");
    expect(banner.textContent).toMatch(/3 repair iterations/);
  });

  it("renders the mapping table and resolved SQL after DONE", async () => {
    stub.onSubmitJob = {
      states: ["DONE"],
      funnel: makeFunnel([7, 2]),
      sql: {
        generated: "SELECT ... IN ([condition@hypertension])",
        resolved: "SELECT ... IN (316866)",
        healing_attempts: [],
        mappings: [
          {
            term: "hypertension",
            domain: "CONDITION",
            chosen: [316866],
            verified: true,
            candidates: [{ concept_id: 316866, score: 1.0 }],
          },
        ],
      },
    };
    const { app, editor } = setup(stub);
    editor.value = VALID_CRITERIA;
    await app.editAndRerun();
    await settle();
    expect(document.getElementById("generated-sql")!.textContent).toBe(
      "SELECT ... IN (316866)",
    );
    const cells = [...document.querySelectorAll("#mappings-view td")].map(
      (el) => el.textContent,
    );
    expect(cells).toContain("hypertension");
    expect(cells).toContain("316866");
  });
});

import type { MappingDoc } from "./types.js";

/** Concept-mapping review table: term, domain, chosen IDs, candidates. */
export function renderMappings(container: HTMLElement, mappings: MappingDoc[]): void {
  container.textContent = "";
  if (mappings.length === 0) {
    container.textContent = "no placeholders were normalized for this job";
    return;
  }
  const table = document.createElement("table");
  table.className = "mappings";
  const head = document.createElement("tr");
  for (const title of ["Term", "Domain", "Chosen concept IDs", "Verified", "Candidates"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const mapping of mappings) {
    const row = document.createElement("tr");
    const cells = [
      mapping.term,
      mapping.domain,
      mapping.chosen.join(", "),
      mapping.verified ? "yes" : "no",
      mapping.candidates
        .map((c) => `${c.concept_id} (${c.score.toFixed(3)})`)
        .join(", "),
    ];
    for (const text of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      row.appendChild(td);
    }
    table.appendChild(row);
  }
  container.appendChild(table);
}

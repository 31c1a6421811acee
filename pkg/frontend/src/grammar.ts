/** Client-side check of the structured criteria grammar.
 *
 * Mirrors the service's deterministic parser: an "Index date:" rule,
 * an "Inclusion:" section with at least one "-" bullet, an optional
 * "Exclusion:" section. Violations carry 1-based line numbers so the
 * editor can annotate the offending line before anything is submitted.
 */

export interface GrammarViolation {
  line: number; // 1-based; 0 when the whole document is at fault
  message: string;
}

const HEADING = /^\s*(index date|inclusion(?: criteria)?|exclusion(?: criteria)?)\s*:\s*(.*)$/i;
const BULLET = /^\s*[-*]\s+(.*)$/;

export interface ParsedCriteria {
  indexRule: string;
  inclusion: string[];
  exclusion: string[];
}

export function checkCriteria(text: string): {
  violations: GrammarViolation[];
  parsed: ParsedCriteria | null;
} {
  const violations: GrammarViolation[] = [];
  if (!text.trim()) {
    return { violations: [{ line: 0, message: "criteria text is empty" }], parsed: null };
  }

  const indexParts: string[] = [];
  const sections: Record<"inclusion" | "exclusion", string[]> = { inclusion: [], exclusion: [] };
  let current: "index" | "inclusion" | "exclusion" | null = null;

  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    const lineNo = i + 1;
    if (!line.trim()) continue;

    const heading = line.match(HEADING);
    if (heading) {
      const name = heading[1].toLowerCase();
      const rest = heading[2].trim();
      if (name.startsWith("index")) {
        current = "index";
        if (rest) indexParts.push(rest);
      } else if (name.startsWith("inclusion")) {
        current = "inclusion";
        if (rest) violations.push({ line: lineNo, message: "criteria must be '-' bullets under the heading" });
      } else {
        current = "exclusion";
        if (rest) violations.push({ line: lineNo, message: "criteria must be '-' bullets under the heading" });
      }
      continue;
    }

    const bullet = line.match(BULLET);
    if (bullet) {
      const item = bullet[1].trim();
      if (current === "index") {
        indexParts.push(item);
      } else if (current === "inclusion" || current === "exclusion") {
        sections[current].push(item);
      } else {
        violations.push({ line: lineNo, message: "bullet outside any section" });
      }
      continue;
    }

    // continuation of the previous item
    if (current === "index" && indexParts.length > 0) {
      indexParts[indexParts.length - 1] += " " + line.trim();
    } else if (current && current !== "index" && sections[current].length > 0) {
      sections[current][sections[current].length - 1] += " " + line.trim();
    } else {
      violations.push({ line: lineNo, message: `unrecognized line: ${line.trim()}` });
    }
  }

  const indexRule = indexParts.join(" ").trim();
  if (!indexRule) {
    violations.push({ line: 0, message: "missing index-date rule ('Index date:' heading)" });
  }
  if (sections.inclusion.length === 0) {
    violations.push({ line: 0, message: "no inclusion criteria found" });
  }

  if (violations.length > 0) {
    return { violations, parsed: null };
  }
  return {
    violations: [],
    parsed: { indexRule, inclusion: sections.inclusion, exclusion: sections.exclusion },
  };
}

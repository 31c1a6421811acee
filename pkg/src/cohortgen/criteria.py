"""Cohort criteria model and parsing.

Two parse routes produce the same semi-structured model: a deterministic
grammar over the structured text format (headings + "-" bullets), and an
LLM route that asks the model to emit that same format and then parses
it, with one reformat retry on nonconforming output.

Structured format:

    Index date: first diagnosis of hypertension
    Inclusion:
    - age >= 18 at index date
    - at least one diagnosis of hypertension
    Exclusion:
    - prior metformin use
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .llm import LLMProvider, Message
from .masking import EntitySpan
from .prompts import load_prompt


class CriteriaParseError(ValueError):
    """Raw criteria text that cannot be parsed into the model."""


class CriteriaSchemaError(ValueError):
    """LLM parser output that still violates the schema after a retry."""


@dataclass
class Criterion:
    id: str
    text: str
    entities: list[EntitySpan] = field(default_factory=list)


@dataclass
class CohortCriteria:
    inclusion: list[Criterion]
    exclusion: list[Criterion]
    index_date_rule: str

    def all_criteria(self) -> list[Criterion]:
        return list(self.inclusion) + list(self.exclusion)


_HEADING_RE = re.compile(
    r"^\s*(index date|inclusion(?: criteria)?|exclusion(?: criteria)?)\s*:\s*(.*)$",
    re.IGNORECASE,
)
_BULLET_RE = re.compile(r"^\s*[-*]\s+(.*)$")


def parse_criteria_text(raw: str) -> CohortCriteria:
    """Deterministic grammar path over the structured text format."""
    if not raw or not raw.strip():
        raise CriteriaParseError("criteria text is empty")

    index_rule_parts: list[str] = []
    sections: dict[str, list[str]] = {"inclusion": [], "exclusion": []}
    current: str | None = None

    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        heading = _HEADING_RE.match(line)
        if heading:
            name = heading.group(1).lower()
            rest = heading.group(2).strip()
            if name.startswith("index"):
                current = "index"
                if rest:
                    index_rule_parts.append(rest)
            elif name.startswith("inclusion"):
                current = "inclusion"
                if rest:
                    raise CriteriaParseError(
                        f"line {lineno}: criteria must be '-' bullets under the heading"
                    )
            else:
                current = "exclusion"
                if rest:
                    raise CriteriaParseError(
                        f"line {lineno}: criteria must be '-' bullets under the heading"
                    )
            continue
        bullet = _BULLET_RE.match(line)
        if bullet:
            text = bullet.group(1).strip()
            if current == "index":
                index_rule_parts.append(text)
            elif current in sections:
                sections[current].append(text)
            else:
                raise CriteriaParseError(f"line {lineno}: bullet outside any section")
            continue
        # continuation of the previous item
        if current == "index" and index_rule_parts:
            index_rule_parts[-1] += " " + line.strip()
        elif current in sections and sections[current]:
            sections[current][-1] += " " + line.strip()
        else:
            raise CriteriaParseError(f"line {lineno}: unrecognized line {line.strip()!r}")

    index_rule = " ".join(index_rule_parts).strip()
    if not index_rule:
        raise CriteriaParseError("missing index-date rule ('Index date:' heading)")
    if not sections["inclusion"]:
        raise CriteriaParseError("no inclusion criteria found")

    inclusion = [
        Criterion(id=f"inc-{i}", text=t) for i, t in enumerate(sections["inclusion"], 1)
    ]
    exclusion = [
        Criterion(id=f"exc-{i}", text=t) for i, t in enumerate(sections["exclusion"], 1)
    ]
    return CohortCriteria(inclusion=inclusion, exclusion=exclusion, index_date_rule=index_rule)


def serialize_criteria(criteria: CohortCriteria) -> str:
    """Render the structured text form; inverse of parse_criteria_text."""
    lines = [f"Index date: {criteria.index_date_rule}"]
    lines.append("Inclusion:")
    lines.extend(f"- {c.text}" for c in criteria.inclusion)
    if criteria.exclusion:
        lines.append("Exclusion:")
        lines.extend(f"- {c.text}" for c in criteria.exclusion)
    return "\n".join(lines) + "\n"


def parse_criteria(raw: str, parser: LLMProvider | None = None) -> CohortCriteria:
    """Parse raw criteria text, via the LLM when one is configured.

    The LLM is prompted to restate the text in the structured format;
    its output goes through the deterministic grammar. One reformat
    retry is attempted before giving up.
    """
    if not raw or not raw.strip():
        raise CriteriaParseError("criteria text is empty")
    if parser is None:
        return parse_criteria_text(raw)

    prompt = load_prompt("criteria_parser").format(criteria_text=raw)
    response = parser.complete([Message(role="user", content=prompt)])
    try:
        return parse_criteria_text(response)
    except CriteriaParseError as first_error:
        retry_prompt = load_prompt("criteria_parser_retry").format(
            previous_output=response, error=str(first_error)
        )
        response = parser.complete([Message(role="user", content=retry_prompt)])
        try:
            return parse_criteria_text(response)
        except CriteriaParseError as exc:
            raise CriteriaSchemaError(
                f"parser output did not conform after one retry: {exc}"
            ) from exc


def validate_criteria(criteria: CohortCriteria) -> list[str]:
    """Report violated invariants; empty list means valid."""
    violations: list[str] = []
    if not criteria.inclusion:
        violations.append("inclusion nonempty")
    if not criteria.index_date_rule or not criteria.index_date_rule.strip():
        violations.append("index_date_rule nonempty")
    seen: dict[str, int] = {}
    for criterion in criteria.all_criteria():
        if not criterion.text or not criterion.text.strip():
            violations.append(f"criterion {criterion.id}: text nonempty")
        seen[criterion.id] = seen.get(criterion.id, 0) + 1
    duplicates = sorted(cid for cid, count in seen.items() if count > 1)
    if duplicates:
        violations.append(f"duplicate criterion ids: {', '.join(duplicates)}")
    return violations

"""Prompt compilation, SQL generation, placeholder grammar, self-healing.

Four prompting strategies are supported: zero-shot (ZS), criteria-level
retrieval (RAG_A, question-SQL exemplars per criterion), cohort-level
retrieval (RAG_C, whole cohort definitions), and their combination
(RAG_AC). Generated SQL defers medical coding to `[domain@term]`
placeholders; non-executable SQL is repaired by feeding the engine's
verbatim error back to the model for a bounded number of iterations.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .criteria import CohortCriteria, Criterion
from .kb import KBEntry
from .llm import LLMProvider, Message
from .masking import Domain, mask_entities
from .prompts import load_prompt
from .retrieval import RetrievalConfig, RetrievalHit, VectorIndex, retrieve

DEFAULT_PROMPT_BUDGET_CHARS = 24_000


class Strategy(str, enum.Enum):
    ZS = "zs"
    RAG_A = "rag_a"
    RAG_C = "rag_c"
    RAG_AC = "rag_ac"

    @classmethod
    def from_string(cls, value: str) -> "Strategy":
        try:
            return cls(value.strip().lower())
        except ValueError:
            valid = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {value!r}; valid: {valid}") from None

    @property
    def uses_ask(self) -> bool:
        return self in (Strategy.RAG_A, Strategy.RAG_AC)

    @property
    def uses_coho(self) -> bool:
        return self in (Strategy.RAG_C, Strategy.RAG_AC)


class PlaceholderError(ValueError):
    """Malformed placeholder (unknown domain or empty term), naming the span."""


class GenerationError(RuntimeError):
    """No SQL statement could be extracted from the model output."""


class ConfigurationError(ValueError):
    """A strategy requires an index that was not supplied."""


_PLACEHOLDER_RE = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)@([^\[\]]*)\]")
_VALID_DOMAINS = {d.value.lower(): d for d in Domain}


@dataclass(frozen=True)
class Placeholder:
    domain: Domain
    term: str
    start: int
    end: int

    @property
    def surface(self) -> str:
        return f"[{self.domain.value.lower()}@{self.term}]"


def parse_placeholders(sql: str) -> list[Placeholder]:
    """All `[domain@term]` placeholders in left-to-right order.

    Total over arbitrary text: brackets that do not match the grammar are
    ignored; bracket groups that match the shape but carry an unknown
    domain or empty term raise PlaceholderError naming the span.
    """
    placeholders: list[Placeholder] = []
    for m in _PLACEHOLDER_RE.finditer(sql):
        raw_domain, term = m.group(1), m.group(2)
        domain = _VALID_DOMAINS.get(raw_domain)
        if domain is None:
            raise PlaceholderError(
                f"unknown placeholder domain {raw_domain!r} at span {m.start()}..{m.end()}"
            )
        if not term.strip():
            raise PlaceholderError(
                f"empty placeholder term at span {m.start()}..{m.end()}"
            )
        placeholders.append(
            Placeholder(domain=domain, term=term, start=m.start(), end=m.end())
        )
    return placeholders


@dataclass
class Exemplar:
    entry_id: str
    score: float
    header: str
    text: str
    sql: str

    def render(self) -> str:
        return f"{self.header}\n{self.text}\n\nExample SQL:\n{self.sql}\n"


@dataclass
class PromptBundle:
    strategy: Strategy
    messages: list[Message]
    exemplar_ids: list[str]

    @property
    def char_length(self) -> int:
        return sum(len(m.content) for m in self.messages)


@dataclass(frozen=True)
class HealingConfig:
    max_iterations: int = 3

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")


@dataclass
class Attempt:
    sql: str
    error: str | None


@dataclass
class GeneratedSQL:
    sql: str
    placeholders: list[Placeholder]
    strategy: Strategy
    attempts: list[Attempt] = field(default_factory=list)


def _masked_criterion(criterion: Criterion) -> str:
    if not criterion.entities:
        return criterion.text
    return mask_entities(criterion.text, criterion.entities)


def masked_criteria_text(criteria: CohortCriteria) -> str:
    """Structured criteria text with every criterion's entities masked."""
    lines = [f"Index date: {criteria.index_date_rule}", "Inclusion:"]
    lines.extend(f"- {_masked_criterion(c)}" for c in criteria.inclusion)
    if criteria.exclusion:
        lines.append("Exclusion:")
        lines.extend(f"- {_masked_criterion(c)}" for c in criteria.exclusion)
    return "\n".join(lines)


def _ask_exemplars(
    criteria: CohortCriteria,
    index: VectorIndex,
    entries: dict[str, KBEntry],
    cfg: RetrievalConfig,
) -> list[Exemplar]:
    """Per-criterion question exemplars, deduped by entry id."""
    exemplars: list[Exemplar] = []
    seen: set[str] = set()
    for criterion in criteria.all_criteria():
        hits = retrieve(index, _masked_criterion(criterion), cfg)
        for hit in hits:
            if hit.entry_id in seen:
                continue
            seen.add(hit.entry_id)
            entry = entries[hit.entry_id]
            exemplars.append(
                Exemplar(
                    entry_id=entry.id,
                    score=hit.score,
                    header=f"Example question (similar to criterion {criterion.id}):",
                    text=entry.natural_text,
                    sql=entry.sql,
                )
            )
    return exemplars


def _coho_exemplars(
    criteria: CohortCriteria,
    index: VectorIndex,
    entries: dict[str, KBEntry],
    cfg: RetrievalConfig,
) -> list[Exemplar]:
    hits = retrieve(index, masked_criteria_text(criteria), cfg)
    exemplars = []
    for hit in hits:
        entry = entries[hit.entry_id]
        exemplars.append(
            Exemplar(
                entry_id=entry.id,
                score=hit.score,
                header="Example cohort definition:",
                text=entry.natural_text,
                sql=entry.sql,
            )
        )
    return exemplars


def _render_block(exemplars: list[Exemplar]) -> str:
    if not exemplars:
        return ""
    return "\n".join(e.render() for e in exemplars) + "\n"


def _fit_budget(exemplars: list[Exemplar], length_fn, budget: int) -> list[Exemplar]:
    """Drop lowest-similarity exemplars until the prompt fits the budget.

    length_fn maps a candidate exemplar list to the exact prompt length.
    """
    kept = list(exemplars)
    while kept and length_fn(kept) > budget:
        victim = min(range(len(kept)), key=lambda i: (kept[i].score, -i))
        kept.pop(victim)
    return kept


def compile_prompt(
    criteria: CohortCriteria,
    strategy: Strategy,
    ask_index: VectorIndex | None = None,
    ask_entries: dict[str, KBEntry] | None = None,
    coho_index: VectorIndex | None = None,
    coho_entries: dict[str, KBEntry] | None = None,
    cfg: RetrievalConfig = RetrievalConfig(),
    dialect: str = "sqlite",
    budget_chars: int = DEFAULT_PROMPT_BUDGET_CHARS,
) -> PromptBundle:
    """Compile the strategy-specific generation prompt.

    Deterministic for fixed indexes and configuration: same inputs
    produce byte-identical message content.
    """
    if strategy.uses_ask and (ask_index is None or ask_entries is None):
        raise ConfigurationError(f"strategy {strategy.value} requires the ASK index")
    if strategy.uses_coho and (coho_index is None or coho_entries is None):
        raise ConfigurationError(f"strategy {strategy.value} requires the COHO index")

    exemplars: list[Exemplar] = []
    if strategy.uses_coho:
        exemplars.extend(_coho_exemplars(criteria, coho_index, coho_entries, cfg))
    if strategy.uses_ask:
        exemplars.extend(_ask_exemplars(criteria, ask_index, ask_entries, cfg))

    from .criteria import serialize_criteria

    system_text = load_prompt("sqlgen_system").format(dialect=dialect)
    criteria_text = serialize_criteria(criteria).rstrip("\n")
    template = load_prompt("sqlgen_cohort")

    def bundle_length(candidate: list[Exemplar]) -> int:
        return len(system_text) + len(
            template.format(exemplar_block=_render_block(candidate), criteria_text=criteria_text)
        )

    exemplars = _fit_budget(exemplars, bundle_length, budget_chars)
    user_text = template.format(
        exemplar_block=_render_block(exemplars), criteria_text=criteria_text
    )
    return PromptBundle(
        strategy=strategy,
        messages=[Message("system", system_text), Message("user", user_text)],
        exemplar_ids=[e.entry_id for e in exemplars],
    )


def compile_criterion_prompt(
    criterion: Criterion,
    kind: str,
    strategy: Strategy,
    ask_index: VectorIndex | None = None,
    ask_entries: dict[str, KBEntry] | None = None,
    cfg: RetrievalConfig = RetrievalConfig(),
    dialect: str = "sqlite",
    budget_chars: int = DEFAULT_PROMPT_BUDGET_CHARS,
) -> PromptBundle:
    """Prompt for one criterion's stand-alone patient query (funnel step)."""
    exemplars: list[Exemplar] = []
    if strategy.uses_ask:
        if ask_index is None or ask_entries is None:
            raise ConfigurationError(f"strategy {strategy.value} requires the ASK index")
        for hit in retrieve(ask_index, _masked_criterion(criterion), cfg):
            entry = ask_entries[hit.entry_id]
            exemplars.append(
                Exemplar(
                    entry_id=entry.id,
                    score=hit.score,
                    header="Example question:",
                    text=entry.natural_text,
                    sql=entry.sql,
                )
            )
    system_text = load_prompt("sqlgen_system").format(dialect=dialect)
    template = load_prompt("sqlgen_criterion")

    def bundle_length(candidate: list[Exemplar]) -> int:
        return len(system_text) + len(
            template.format(
                exemplar_block=_render_block(candidate),
                criterion_kind=kind,
                criterion_text=criterion.text,
            )
        )

    exemplars = _fit_budget(exemplars, bundle_length, budget_chars)
    user_text = template.format(
        exemplar_block=_render_block(exemplars), criterion_kind=kind, criterion_text=criterion.text
    )
    return PromptBundle(
        strategy=strategy,
        messages=[Message("system", system_text), Message("user", user_text)],
        exemplar_ids=[e.entry_id for e in exemplars],
    )


_FENCE_RE = re.compile(r"```(?:sql)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)
_SQL_START_RE = re.compile(r"\b(SELECT|WITH)\b", re.IGNORECASE)


def extract_sql(text: str) -> str:
    """Extract one SQL statement from model output.

    Preference order: first fenced code block; else the longest substring
    starting at a SELECT/WITH keyword that the complexity tokenizer
    accepts; else GenerationError.
    """
    if not text or not text.strip():
        raise GenerationError("model returned empty output")
    fence = _FENCE_RE.search(text)
    if fence:
        candidate = fence.group(1).strip().rstrip(";").strip()
        if candidate:
            return candidate
        raise GenerationError("fenced code block was empty")

    from .sql_complexity import SqlAnalysisError, analyze_sql

    starts = [m.start() for m in _SQL_START_RE.finditer(text)]
    best: str | None = None
    for start in starts:
        tail = text[start:].strip().rstrip(";").strip()
        endings = [len(tail)] + [i for i, ch in enumerate(tail) if ch == ";"]
        for end in sorted(set(endings), reverse=True):
            candidate = tail[:end].strip().rstrip(";")
            if not candidate or not re.search(r"\bSELECT\b", candidate, re.IGNORECASE):
                continue
            try:
                analyze_sql(candidate)
            except SqlAnalysisError:
                continue
            if best is None or len(candidate) > len(best):
                best = candidate
            break
    if best is None:
        raise GenerationError("no SQL statement found in model output")
    return best


def generate_sql(bundle: PromptBundle, llm: LLMProvider) -> GeneratedSQL:
    """Call the model with a compiled prompt and parse the result."""
    response = llm.complete(bundle.messages, temperature=0.0)
    sql = extract_sql(response)
    placeholders = parse_placeholders(sql)
    return GeneratedSQL(sql=sql, placeholders=placeholders, strategy=bundle.strategy)


@dataclass
class ExecutableOutcome:
    sql: str
    iterations_used: int
    attempts: list[Attempt]


class HealingFailure(RuntimeError):
    """SQL still failing after the configured number of repair iterations."""

    def __init__(self, attempts: list[Attempt]):
        super().__init__(
            f"SQL still failing after {max(len(attempts) - 1, 0)} repair iterations; "
            f"last error: {attempts[-1].error}"
        )
        self.attempts = attempts


def self_heal(
    sql: str,
    backend,
    llm: LLMProvider,
    cfg: HealingConfig = HealingConfig(),
) -> ExecutableOutcome:
    """Iteratively repair non-executable SQL via compiler error feedback.

    Placeholders must already be resolved. Each retry prompt carries the
    prior SQL and the engine's verbatim diagnostic. Raises HealingFailure
    with the full attempt history when the budget is exhausted.
    """
    from .backend import ExecutionError

    attempts: list[Attempt] = []
    current = sql
    for iteration in range(cfg.max_iterations + 1):
        try:
            backend.execute(current)
        except ExecutionError as exc:
            attempts.append(Attempt(sql=current, error=str(exc)))
        else:
            attempts.append(Attempt(sql=current, error=None))
            return ExecutableOutcome(sql=current, iterations_used=iteration, attempts=attempts)
        if iteration == cfg.max_iterations:
            break
        prompt = load_prompt("heal").format(sql=current, error=attempts[-1].error)
        response = llm.complete([Message("user", prompt)], temperature=0.0)
        try:
            current = extract_sql(response)
        except GenerationError as exc:
            # an unusable repair consumes the iteration; keep the prior SQL
            attempts[-1].error = f"{attempts[-1].error} (repair unusable: {exc})"
    raise HealingFailure(attempts)

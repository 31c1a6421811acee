"""End-to-end orchestration: criteria text in, cohort and funnel out.

This is the wiring layer over the domain modules (parse, retrieve,
generate, normalize, heal, execute, funnel); it owns no algorithmic
logic of its own. Stage callbacks let the job service surface progress.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .backend import ExecutionError, ShapeError, SqlBackend, fetch_cohort, fetch_person_ids
from .criteria import CohortCriteria, parse_criteria, parse_criteria_text
from .embeddings import EmbeddingProvider
from .evaluation import SampleOutcome
from .funnel import Cohort, Funnel, StepKind, compute_funnel
from .generation import (
    Attempt,
    ConfigurationError,
    GeneratedSQL,
    HealingConfig,
    HealingFailure,
    PromptBundle,
    Strategy,
    compile_criterion_prompt,
    compile_prompt,
    generate_sql,
    parse_placeholders,
    self_heal,
)
from .kb import KBEntry
from .llm import LLMProvider, Message
from .masking import DictionaryEntityDetector, detect_entities
from .normalize import ConceptMapping, NormalizationError, VocabIndex, normalize_term, resolve_placeholders
from .prompts import load_prompt
from .retrieval import RetrievalConfig, VectorIndex, build_index


@dataclass
class PipelineResult:
    criteria: CohortCriteria
    strategy: Strategy
    generated: GeneratedSQL
    resolved_sql: str
    mappings: list[ConceptMapping]
    cohort: Cohort
    funnel: Funnel | None
    healing_attempts: list[Attempt] = field(default_factory=list)


class PipelineError(RuntimeError):
    """A stage failed; the message names the stage and cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


class CohortPipeline:
    def __init__(
        self,
        backend: SqlBackend,
        llm: LLMProvider,
        embedder: EmbeddingProvider,
        vocab_index: VocabIndex,
        entity_detector: DictionaryEntityDetector,
        ask_entries: list[KBEntry] | None = None,
        coho_entries: list[KBEntry] | None = None,
        retrieval_cfg: RetrievalConfig = RetrievalConfig(),
        healing_cfg: HealingConfig = HealingConfig(),
        verifier: LLMProvider | None = None,
        criteria_parser: LLMProvider | None = None,
        prompt_budget_chars: int = 24_000,
    ):
        self.backend = backend
        self.llm = llm
        self.embedder = embedder
        self.vocab_index = vocab_index
        self.entity_detector = entity_detector
        self.retrieval_cfg = retrieval_cfg
        self.healing_cfg = healing_cfg
        self.verifier = verifier
        self.criteria_parser = criteria_parser
        self.prompt_budget_chars = prompt_budget_chars

        self.ask_entries = {e.id: e for e in (ask_entries or [])}
        self.coho_entries = {e.id: e for e in (coho_entries or [])}
        self.ask_index: VectorIndex | None = (
            build_index(ask_entries, embedder) if ask_entries else None
        )
        self.coho_index: VectorIndex | None = (
            build_index(coho_entries, embedder) if coho_entries else None
        )

    # -- shared stages -------------------------------------------------

    def check_backend(self) -> None:
        self.backend.execute("SELECT 1")

    def parse(self, criteria_text: str, use_llm: bool = False) -> CohortCriteria:
        if use_llm and self.criteria_parser is not None:
            criteria = parse_criteria(criteria_text, self.criteria_parser)
        else:
            criteria = parse_criteria_text(criteria_text)
        for criterion in criteria.all_criteria():
            criterion.entities = detect_entities(criterion.text, self.entity_detector)
        return criteria

    def _retrieval_cfg(self, exclude_ids: frozenset[str]) -> RetrievalConfig:
        if not exclude_ids:
            return self.retrieval_cfg
        return RetrievalConfig(
            k=self.retrieval_cfg.k,
            exclude_ids=frozenset(self.retrieval_cfg.exclude_ids) | exclude_ids,
        )

    def compile_cohort_prompt(
        self,
        criteria: CohortCriteria,
        strategy: Strategy,
        exclude_ids: frozenset[str] = frozenset(),
    ) -> PromptBundle:
        return compile_prompt(
            criteria,
            strategy,
            ask_index=self.ask_index,
            ask_entries=self.ask_entries,
            coho_index=self.coho_index,
            coho_entries=self.coho_entries,
            cfg=self._retrieval_cfg(exclude_ids),
            dialect=self.backend.dialect,
            budget_chars=self.prompt_budget_chars,
        )

    def normalize_placeholders(self, generated: GeneratedSQL) -> tuple[str, list[ConceptMapping]]:
        mappings: list[ConceptMapping] = []
        seen: set[tuple] = set()
        for placeholder in generated.placeholders:
            key = (placeholder.domain, placeholder.term)
            if key in seen:
                continue
            seen.add(key)
            mappings.append(
                normalize_term(
                    placeholder.term, placeholder.domain, self.vocab_index, self.verifier
                )
            )
        return resolve_placeholders(generated, mappings), mappings

    def _generate_and_execute(self, bundle: PromptBundle) -> tuple[GeneratedSQL, str, list[ConceptMapping], list[Attempt]]:
        generated = generate_sql(bundle, self.llm)
        resolved, mappings = self.normalize_placeholders(generated)
        outcome = self_heal(resolved, self.backend, self.llm, self.healing_cfg)
        generated.attempts = outcome.attempts
        return generated, outcome.sql, mappings, outcome.attempts

    # -- job entry points ----------------------------------------------

    def run(
        self,
        criteria_text: str,
        strategy: Strategy,
        exclude_ids: frozenset[str] = frozenset(),
        with_funnel: bool = True,
        use_llm_parser: bool = False,
        on_stage: Callable[[str], None] | None = None,
    ) -> PipelineResult:
        def stage(name: str):
            if on_stage:
                on_stage(name)

        stage("PARSING")
        try:
            criteria = self.parse(criteria_text, use_llm=use_llm_parser)
        except Exception as exc:
            raise PipelineError("PARSING", exc) from exc

        if strategy is not Strategy.ZS:
            stage("RETRIEVING")
        stage("GENERATING")
        try:
            bundle = self.compile_cohort_prompt(criteria, strategy, exclude_ids)
            generated = generate_sql(bundle, self.llm)
        except (ConfigurationError, Exception) as exc:
            raise PipelineError("GENERATING", exc) from exc

        stage("NORMALIZING")
        try:
            resolved, mappings = self.normalize_placeholders(generated)
        except (NormalizationError, Exception) as exc:
            raise PipelineError("NORMALIZING", exc) from exc

        stage("HEALING")
        try:
            outcome = self_heal(resolved, self.backend, self.llm, self.healing_cfg)
        except HealingFailure as exc:
            raise PipelineError("HEALING", exc) from exc
        generated.attempts = outcome.attempts

        stage("EXECUTING")
        try:
            cohort = fetch_cohort(self.backend, outcome.sql)
        except (ExecutionError, ShapeError) as exc:
            raise PipelineError("EXECUTING", exc) from exc

        funnel = None
        if with_funnel:
            stage("FUNNELING")
            try:
                funnel = self.build_funnel(criteria, strategy, exclude_ids)
            except Exception as exc:
                raise PipelineError("FUNNELING", exc) from exc

        return PipelineResult(
            criteria=criteria,
            strategy=strategy,
            generated=generated,
            resolved_sql=outcome.sql,
            mappings=mappings,
            cohort=cohort,
            funnel=funnel,
            healing_attempts=outcome.attempts,
        )

    def build_funnel(
        self,
        criteria: CohortCriteria,
        strategy: Strategy,
        exclude_ids: frozenset[str] = frozenset(),
    ) -> Funnel:
        """Index query plus one stand-alone query per criterion, combined
        by set operations (inclusions intersect, exclusions subtract)."""
        cfg = self._retrieval_cfg(exclude_ids)
        index_bundle = self._index_prompt(criteria)
        _, index_sql, _, _ = self._generate_and_execute(index_bundle)
        index_cohort = fetch_cohort(self.backend, index_sql)

        step_inputs: list[tuple[str, StepKind, set[int]]] = []
        criterion_sql: dict[str, str] = {}
        ordered = [(c, StepKind.INCLUSION) for c in criteria.inclusion] + [
            (c, StepKind.EXCLUSION) for c in criteria.exclusion
        ]
        for criterion, kind in ordered:
            bundle = compile_criterion_prompt(
                criterion,
                kind.value.lower(),
                strategy,
                ask_index=self.ask_index,
                ask_entries=self.ask_entries,
                cfg=cfg,
                dialect=self.backend.dialect,
                budget_chars=self.prompt_budget_chars,
            )
            _, sql, _, _ = self._generate_and_execute(bundle)
            criterion_sql[criterion.id] = sql
            step_inputs.append((criterion.id, kind, fetch_person_ids(self.backend, sql)))

        return compute_funnel(
            index_cohort, step_inputs, index_sql=index_sql, criterion_sql=criterion_sql
        )

    def _index_prompt(self, criteria: CohortCriteria) -> PromptBundle:
        system_text = load_prompt("sqlgen_system").format(dialect=self.backend.dialect)
        user_text = load_prompt("sqlgen_index").format(
            exemplar_block="", index_rule=criteria.index_date_rule
        )
        return PromptBundle(
            strategy=Strategy.ZS,
            messages=[Message("system", system_text), Message("user", user_text)],
            exemplar_ids=[],
        )

    # -- evaluation hooks ----------------------------------------------

    def reference_cohort(self, reference_sql: str) -> Cohort:
        """Execute reference SQL, resolving placeholders via the vocabulary."""
        placeholders = parse_placeholders(reference_sql)
        if placeholders:
            generated = GeneratedSQL(
                sql=reference_sql, placeholders=placeholders, strategy=Strategy.ZS
            )
            resolved, _ = self.normalize_placeholders(generated)
        else:
            resolved = reference_sql
        return fetch_cohort(self.backend, resolved)

    def run_sample(
        self, criteria_text: str, strategy: Strategy, exclude_ids: frozenset[str]
    ) -> SampleOutcome:
        """Evaluation entry point: cohort query only, no funnel.

        Healing failures and unextractable SQL yield valid_sql=False;
        shape errors on an executable query count as retrieved=False.
        """
        criteria = self.parse(criteria_text)
        bundle = self.compile_cohort_prompt(criteria, strategy, exclude_ids)
        try:
            generated = generate_sql(bundle, self.llm)
            resolved, _ = self.normalize_placeholders(generated)
            outcome = self_heal(resolved, self.backend, self.llm, self.healing_cfg)
        except Exception:
            return SampleOutcome(valid_sql=False, cohort=None)
        try:
            cohort = fetch_cohort(self.backend, outcome.sql)
        except (ExecutionError, ShapeError):
            return SampleOutcome(valid_sql=True, cohort=Cohort())
        return SampleOutcome(valid_sql=True, cohort=cohort)

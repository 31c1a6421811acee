"""Medical entity normalization: placeholder terms to OMOP concept IDs.

Terms are matched against an embedded vocabulary index (concept names
plus synonyms) by cosine similarity; an exact case-insensitive name or
synonym match always wins with score 1.0. An optional LLM verification
layer filters the ranked candidates before substitution, which keeps
hallucinated concept IDs out of the final SQL.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingProvider, embed
from .generation import GeneratedSQL, Placeholder
from .llm import LLMProvider, Message
from .masking import Domain
from .prompts import load_prompt

CANDIDATE_FLOOR = 0.30


class VocabularyError(ValueError):
    """Invalid vocabulary input (duplicate ids, malformed rows)."""


class NormalizationError(RuntimeError):
    """No acceptable concept candidate for a term."""


class ResolutionError(RuntimeError):
    """A placeholder with no usable mapping, named in the message."""


@dataclass(frozen=True)
class ConceptRecord:
    concept_id: int
    name: str
    domain: Domain
    vocabulary: str
    synonyms: tuple[str, ...] = ()

    def labels(self) -> list[str]:
        return [self.name, *self.synonyms]


@dataclass
class ConceptMapping:
    term: str
    domain: Domain
    candidates: list[tuple[int, float]]  # (concept_id, score), non-increasing
    chosen: list[int]
    verified: bool = False


def load_vocabulary(
    concepts_path: str | Path, synonyms_path: str | Path | None = None
) -> list[ConceptRecord]:
    """Load concepts from delimited text (concept_id, concept_name,
    domain_id, vocabulary_id) plus an optional synonyms companion file
    keyed by concept_id."""
    synonyms: dict[int, list[str]] = {}
    if synonyms_path is not None:
        with open(synonyms_path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh, delimiter="\t"):
                if not row or row[0].startswith("#") or row[0] == "concept_id":
                    continue
                synonyms.setdefault(int(row[0]), []).append(row[1])
    records: list[ConceptRecord] = []
    with open(concepts_path, encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if not row or row[0].startswith("#") or row[0] == "concept_id":
                continue
            concept_id = int(row[0])
            records.append(
                ConceptRecord(
                    concept_id=concept_id,
                    name=row[1],
                    domain=Domain.from_string(row[2]),
                    vocabulary=row[3] if len(row) > 3 else "",
                    synonyms=tuple(synonyms.get(concept_id, ())),
                )
            )
    return records


class VocabIndex:
    """Per-domain embedded index over concept names and synonyms."""

    def __init__(self, provider: EmbeddingProvider):
        self._provider = provider
        self._by_domain: dict[Domain, list[tuple[int, str, np.ndarray]]] = {}
        self._records: dict[int, ConceptRecord] = {}

    def __len__(self) -> int:
        return len(self._records)

    def record(self, concept_id: int) -> ConceptRecord:
        return self._records[concept_id]

    def domain_size(self, domain: Domain) -> int:
        return len({cid for cid, _, _ in self._by_domain.get(domain, [])})

    def add(self, record: ConceptRecord) -> None:
        if record.concept_id in self._records:
            raise VocabularyError(f"duplicate concept_id: {record.concept_id}")
        if record.concept_id <= 0:
            raise VocabularyError(f"concept_id must be positive: {record.concept_id}")
        if not record.name:
            raise VocabularyError("concept name must be nonempty")
        self._records[record.concept_id] = record
        bucket = self._by_domain.setdefault(record.domain, [])
        for label in record.labels():
            bucket.append((record.concept_id, label.lower(), embed(label, self._provider)))

    def candidates(self, term: str, domain: Domain) -> list[tuple[int, float]]:
        """Ranked (concept_id, score); exact label match forces score 1.0."""
        bucket = self._by_domain.get(domain, [])
        if not bucket:
            return []
        qvec = embed(term, self._provider)
        term_lower = term.strip().lower()
        best: dict[int, float] = {}
        for concept_id, label, vec in bucket:
            score = 1.0 if label == term_lower else float(np.dot(qvec, vec))
            if score > best.get(concept_id, -2.0):
                best[concept_id] = score
        ranked = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked


def build_vocab_index(concepts: list[ConceptRecord], provider: EmbeddingProvider) -> VocabIndex:
    index = VocabIndex(provider)
    for record in concepts:
        index.add(record)
    return index


_ID_RE = re.compile(r"\d+")


def _parse_verifier_response(response: str, candidate_ids: set[int]) -> list[int]:
    if "NONE" in response.upper() and not _ID_RE.search(response):
        return []
    chosen = []
    for match in _ID_RE.finditer(response):
        concept_id = int(match.group(0))
        if concept_id in candidate_ids and concept_id not in chosen:
            chosen.append(concept_id)
    return chosen


def normalize_term(
    term: str,
    domain: Domain,
    index: VocabIndex,
    verifier: LLMProvider | None = None,
    floor: float = CANDIDATE_FLOOR,
) -> ConceptMapping:
    """Map one term to standardized concept IDs.

    Without a verifier the top-ranked candidate is chosen; with one, the
    verifier filters the candidate list (and may select several, e.g.
    synonymous concepts). Raises NormalizationError when no candidate
    clears the floor or the verifier rejects everything.
    """
    ranked = [(cid, score) for cid, score in index.candidates(term, domain) if score >= floor]
    if not ranked:
        raise NormalizationError(
            f"no concept candidate above {floor:.2f} for {domain.value.lower()!r} term {term!r}"
        )
    if verifier is None:
        return ConceptMapping(
            term=term, domain=domain, candidates=ranked, chosen=[ranked[0][0]], verified=False
        )
    candidate_block = "\n".join(
        f"- {cid}: {index.record(cid).name} (score {score:.3f})" for cid, score in ranked
    )
    prompt = load_prompt("normalize_verify").format(
        term=term, domain=domain.value.lower(), candidate_block=candidate_block
    )
    response = verifier.complete([Message("user", prompt)], temperature=0.0)
    chosen = _parse_verifier_response(response, {cid for cid, _ in ranked})
    if not chosen:
        raise NormalizationError(
            f"verifier rejected all candidates for {domain.value.lower()!r} term {term!r}"
        )
    return ConceptMapping(term=term, domain=domain, candidates=ranked, chosen=chosen, verified=True)


def resolve_placeholders(generated: GeneratedSQL, mappings: list[ConceptMapping]) -> str:
    """Substitute each placeholder with its chosen concept-id list.

    Substitution is purely textual over the placeholder spans, so all
    non-placeholder characters survive byte-for-byte. The emitted form is
    a bare comma-separated id list, suited to IN (...) contexts.
    """
    by_key: dict[tuple[Domain, str], ConceptMapping] = {}
    for mapping in mappings:
        by_key[(mapping.domain, mapping.term)] = mapping

    def replacement(placeholder: Placeholder) -> str:
        mapping = by_key.get((placeholder.domain, placeholder.term))
        if mapping is None or not mapping.chosen:
            raise ResolutionError(f"unresolved placeholder {placeholder.surface}")
        return ", ".join(str(cid) for cid in mapping.chosen)

    sql = generated.sql
    pieces: list[str] = []
    cursor = 0
    for placeholder in generated.placeholders:
        pieces.append(sql[cursor : placeholder.start])
        pieces.append(replacement(placeholder))
        cursor = placeholder.end
    pieces.append(sql[cursor:])
    return "".join(pieces)

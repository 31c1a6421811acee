"""Medical entity spans and masking.

Masking replaces specific medical terms with generic domain labels
("endometriosis" -> "CONDITION") so that similarity search ranks by
analytical structure instead of by shared medical vocabulary.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class Domain(str, enum.Enum):
    """OMOP-style entity domains recognized by the pipeline."""

    CONDITION = "CONDITION"
    DRUG = "DRUG"
    PROCEDURE = "PROCEDURE"
    MEASUREMENT = "MEASUREMENT"
    OBSERVATION = "OBSERVATION"
    DEVICE = "DEVICE"
    VISIT = "VISIT"

    @classmethod
    def from_string(cls, value: str) -> "Domain":
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise ValueError(f"unknown entity domain: {value!r}") from None


@dataclass(frozen=True)
class EntitySpan:
    """A character span in a source text tagged with its entity domain."""

    start: int
    end: int
    text: str
    domain: Domain

    def validate(self, source: str) -> None:
        if not (0 <= self.start < self.end <= len(source)):
            raise ValueError(
                f"span [{self.start}, {self.end}) out of bounds for text of length {len(source)}"
            )
        actual = source[self.start : self.end]
        if actual != self.text:
            raise ValueError(
                f"span text mismatch: expected {self.text!r}, source has {actual!r}"
            )


class SpanOverlapError(ValueError):
    """Raised when entity spans overlap and cannot be applied."""


def mask_entities(text: str, spans: list[EntitySpan]) -> str:
    """Replace each span's substring with its domain label.

    Spans must be non-overlapping; they are applied by offset, never by
    string search, so repeated terms and partial-word matches are safe.
    """
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = -1
    for span in ordered:
        span.validate(text)
        if span.start < prev_end:
            raise SpanOverlapError(
                f"span [{span.start}, {span.end}) overlaps previous span ending at {prev_end}"
            )
        prev_end = span.end

    pieces: list[str] = []
    cursor = 0
    for span in ordered:
        pieces.append(text[cursor : span.start])
        pieces.append(span.domain.value)
        cursor = span.end
    pieces.append(text[cursor:])
    return "".join(pieces)


class EntityDetector:
    """Interface for entity detection providers."""

    def detect(self, text: str) -> list[EntitySpan]:
        raise NotImplementedError


class DictionaryEntityDetector(EntityDetector):
    """Deterministic detector backed by a term -> domain dictionary.

    Longest term wins at each position; matches are case-insensitive and
    bounded at word boundaries.
    """

    def __init__(self, terms: dict[str, Domain]):
        self._terms = {t.lower(): d for t, d in terms.items()}
        if self._terms:
            alternation = "|".join(
                re.escape(t) for t in sorted(self._terms, key=len, reverse=True)
            )
            self._pattern = re.compile(rf"\b(?:{alternation})\b", re.IGNORECASE)
        else:
            self._pattern = None

    @classmethod
    def from_tsv(cls, path) -> "DictionaryEntityDetector":
        """Load a two-column (term, domain) tab-separated file."""
        terms: dict[str, Domain] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                term, domain = line.split("\t")
                terms[term] = Domain.from_string(domain)
        return cls(terms)

    def detect(self, text: str) -> list[EntitySpan]:
        if not text or self._pattern is None:
            return []
        spans = []
        for m in self._pattern.finditer(text):
            spans.append(
                EntitySpan(
                    start=m.start(),
                    end=m.end(),
                    text=m.group(0),
                    domain=self._terms[m.group(0).lower()],
                )
            )
        return spans


def detect_entities(text: str, provider: EntityDetector) -> list[EntitySpan]:
    """Detect entity spans with the configured provider and validate them."""
    spans = provider.detect(text)
    for span in spans:
        span.validate(text)
    return spans

"""Exact-scan top-k cosine retrieval over KB entries.

The corpora are a few hundred entries, so retrieval is a full matrix
scan; no approximate index is needed. Leave-one-out exclusion supports
the evaluation protocol (a sample never retrieves itself).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingProvider, embed
from .kb import KBEntry


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 5
    exclude_ids: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class RetrievalHit:
    entry_id: str
    score: float


class IndexBuildError(RuntimeError):
    """Embedding failures during index construction, with the failed ids."""

    def __init__(self, failed_ids: list[str]):
        super().__init__(f"failed to embed entries: {', '.join(failed_ids)}")
        self.failed_ids = failed_ids


class VectorIndex:
    """Immutable (id, unit vector) index over one knowledge base."""

    def __init__(self, ids: list[str], matrix: np.ndarray, provider: EmbeddingProvider):
        self._ids = list(ids)
        self._matrix = matrix
        self._provider = provider
        self._matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def provider(self) -> EmbeddingProvider:
        return self._provider

    def query(self, query_masked: str, cfg: RetrievalConfig) -> list[RetrievalHit]:
        if len(self._ids) == 0:
            return []
        qvec = embed(query_masked, self._provider)
        scores = self._matrix @ qvec
        hits = [
            RetrievalHit(entry_id=i, score=float(s))
            for i, s in zip(self._ids, scores)
            if i not in cfg.exclude_ids
        ]
        hits.sort(key=lambda h: (-h.score, h.entry_id))
        return hits[: cfg.k]


def build_index(entries: list[KBEntry], provider: EmbeddingProvider) -> VectorIndex:
    """Embed every entry's masked text (reusing stored embeddings) and index it."""
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    failed: list[str] = []
    for entry in entries:
        if entry.embedding is not None:
            vec = np.asarray(entry.embedding, dtype=np.float64)
        else:
            try:
                vec = embed(entry.masked_text or entry.natural_text, provider)
            except Exception:
                failed.append(entry.id)
                continue
        ids.append(entry.id)
        vectors.append(vec)
    if failed:
        raise IndexBuildError(failed)
    matrix = np.vstack(vectors) if vectors else np.zeros((0, provider.dimension))
    return VectorIndex(ids, matrix, provider)


def retrieve(index: VectorIndex, query_masked: str, cfg: RetrievalConfig) -> list[RetrievalHit]:
    """Top-k hits by cosine similarity, ties broken by ascending entry id."""
    return index.query(query_masked, cfg)

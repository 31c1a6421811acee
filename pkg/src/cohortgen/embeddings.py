"""Embedding providers.

The reference deployment embeds with an external model service
(``bge-large-en-v1.5``); hermetic runs use a hashing bag-of-words
embedder that is fully deterministic and needs no downloads.
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass

import numpy as np

REFERENCE_EMBEDDING_MODEL = "bge-large-en-v1.5"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(RuntimeError):
    """Provider failure while computing an embedding (retriable)."""


class EmbeddingProvider:
    """Interface: embed text into a unit-norm vector of fixed dimension."""

    dimension: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashingEmbedder(EmbeddingProvider):
    """Token-hash bag-of-words embedding, L2-normalized.

    Deterministic across processes and platforms: token -> bucket via
    blake2b, counts accumulated per bucket, vector normalized. Suitable
    for exact-scan cosine retrieval over small corpora.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("embedding dimension must be >= 1")
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise EmbeddingError("cannot embed empty text")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            vec[self._bucket(token)] += 1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # text with no alphanumeric tokens: fall back to a fixed direction
            vec[self._bucket(text)] = 1.0
            norm = 1.0
        return vec / norm


@dataclass
class HttpEmbedderConfig:
    name: str
    model: str = REFERENCE_EMBEDDING_MODEL
    endpoint: str = ""
    api_key_env: str = ""


class HttpEmbedder(EmbeddingProvider):
    """Embedding via an HTTP service exposing a /embeddings-style API."""

    def __init__(self, config: HttpEmbedderConfig, dimension: int = 1024):
        self.config = config
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        import httpx

        headers = {}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if not key:
                raise EmbeddingError(
                    f"credential env var {self.config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = httpx.post(
                self.config.endpoint,
                json={"model": self.config.model, "input": text},
                headers=headers,
                timeout=60.0,
            )
            resp.raise_for_status()
            data = resp.json()["data"][0]["embedding"]
        except Exception as exc:  # network / schema errors are retriable
            raise EmbeddingError(f"embedding request failed: {exc}") from exc
        vec = np.asarray(data, dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            raise EmbeddingError("service returned a zero vector")
        return vec / norm


def embed(text: str, provider: EmbeddingProvider) -> np.ndarray:
    """Embed text, enforcing the unit-norm contract."""
    if not text:
        raise EmbeddingError("cannot embed empty text")
    vec = provider.embed(text)
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-6:
        raise EmbeddingError(f"provider returned non-unit vector (norm {norm})")
    return vec


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))

"""Application configuration: providers, KB paths, backend, knobs.

Credentials never appear in config files; providers reference the name
of an environment variable instead. The packaged reference config pins
the production embedding model identifier; the mock config runs the
whole pipeline hermetically.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import assets
from .backend import SqlBackend, SqliteBackend
from .embeddings import (
    EmbeddingProvider,
    HashingEmbedder,
    HttpEmbedder,
    HttpEmbedderConfig,
    REFERENCE_EMBEDDING_MODEL,
)
from .generation import HealingConfig
from .kb import KBKind, load_kb
from .llm import HttpLLMConfig, HttpLLMProvider, LLMProvider, MockLLMProvider
from .masking import DictionaryEntityDetector
from .normalize import VocabIndex, build_vocab_index, load_vocabulary
from .pipeline import CohortPipeline
from .retrieval import RetrievalConfig
from .synthdb import SyntheticDbSpec, generate_synthetic_omop


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class AppConfig:
    kb_ask_path: Path
    kb_coho_path: Path
    concepts_path: Path
    synonyms_path: Path
    llm: dict = field(default_factory=lambda: {"kind": "mock", "responses": []})
    embedding: dict = field(default_factory=lambda: {"kind": "hash", "dimension": 256})
    backend: dict = field(default_factory=lambda: {"kind": "synthetic", "seed": 7, "n_persons": 200})
    retrieval_k: int = 5
    max_heal_iterations: int = 3
    window_days: int = 30
    prompt_budget_chars: int = 24_000
    use_verifier: bool = False
    job_db_path: Path | None = None
    retention_days: int = 30

    @classmethod
    def from_file(cls, path: str | Path) -> "AppConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls.from_dict(raw, base_dir=Path(path).resolve().parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "AppConfig":
        def resolve(value, default: Path) -> Path:
            if value is None:
                return default
            p = Path(value)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            return p

        kb = raw.get("kb", {})
        vocab = raw.get("vocabulary", {})
        service = raw.get("service", {})
        cfg = cls(
            kb_ask_path=resolve(kb.get("ask_path"), assets.ask_kb_path()),
            kb_coho_path=resolve(kb.get("coho_path"), assets.coho_kb_path()),
            concepts_path=resolve(vocab.get("concepts_path"), assets.concepts_path()),
            synonyms_path=resolve(vocab.get("synonyms_path"), assets.synonyms_path()),
            llm=raw.get("llm", {"kind": "mock", "responses": []}),
            embedding=raw.get("embedding", {"kind": "hash", "dimension": 256}),
            backend=raw.get("backend", {"kind": "synthetic", "seed": 7, "n_persons": 200}),
            retrieval_k=int(raw.get("retrieval", {}).get("k", 5)),
            max_heal_iterations=int(raw.get("healing", {}).get("max_iterations", 3)),
            window_days=int(raw.get("eval", {}).get("window_days", 30)),
            prompt_budget_chars=int(raw.get("prompt_budget_chars", 24_000)),
            use_verifier=bool(raw.get("use_verifier", False)),
            job_db_path=(
                resolve(service["job_db"], Path("jobs.sqlite")) if service.get("job_db") else None
            ),
            retention_days=int(service.get("retention_days", 30)),
        )
        if base_dir is not None and cfg.llm.get("kind") == "mock" and cfg.llm.get("transcript"):
            t = Path(cfg.llm["transcript"])
            if not t.is_absolute():
                cfg.llm = {**cfg.llm, "transcript": str(base_dir / t)}
        return cfg


def build_llm(cfg: dict) -> LLMProvider:
    kind = cfg.get("kind", "mock")
    if kind == "mock":
        if cfg.get("transcript"):
            return MockLLMProvider.from_transcript_file(cfg["transcript"])
        return MockLLMProvider.from_responses(list(cfg.get("responses", [])))
    if kind == "http":
        return HttpLLMProvider(
            HttpLLMConfig(
                name=cfg.get("name", "llm"),
                model=cfg["model"],
                endpoint=cfg["endpoint"],
                api_key_env=cfg.get("api_key_env", ""),
            )
        )
    raise ConfigError(f"unknown llm provider kind: {kind!r}")


def build_embedder(cfg: dict) -> EmbeddingProvider:
    kind = cfg.get("kind", "hash")
    if kind == "hash":
        return HashingEmbedder(dimension=int(cfg.get("dimension", 256)))
    if kind == "http":
        return HttpEmbedder(
            HttpEmbedderConfig(
                name=cfg.get("name", "embedding"),
                model=cfg.get("model", REFERENCE_EMBEDDING_MODEL),
                endpoint=cfg["endpoint"],
                api_key_env=cfg.get("api_key_env", ""),
            ),
            dimension=int(cfg.get("dimension", 1024)),
        )
    raise ConfigError(f"unknown embedding provider kind: {kind!r}")


def build_backend(cfg: dict) -> SqlBackend:
    kind = cfg.get("kind", "synthetic")
    if kind == "synthetic":
        date_range = cfg.get("date_range")
        spec_kwargs = {
            "seed": int(cfg.get("seed", 7)),
            "n_persons": int(cfg.get("n_persons", 200)),
        }
        if date_range:
            spec_kwargs["date_range"] = (
                dt.date.fromisoformat(date_range[0]),
                dt.date.fromisoformat(date_range[1]),
            )
        return generate_synthetic_omop(SyntheticDbSpec(**spec_kwargs), cfg.get("path", ":memory:"))
    if kind == "sqlite":
        return SqliteBackend(cfg.get("path", ":memory:"), dialect=cfg.get("dialect", "sqlite"))
    raise ConfigError(f"unknown backend kind: {kind!r}")


def build_pipeline(config: AppConfig) -> CohortPipeline:
    """Assemble the full pipeline from configuration."""
    records = load_vocabulary(config.concepts_path, config.synonyms_path)
    embedder = build_embedder(config.embedding)
    vocab_index: VocabIndex = build_vocab_index(records, embedder)
    detector = DictionaryEntityDetector(
        {label: r.domain for r in records for label in (r.name, *r.synonyms)}
    )
    llm = build_llm(config.llm)
    backend = build_backend(config.backend)
    ask_entries = load_kb(config.kb_ask_path, KBKind.ASK)
    coho_entries = load_kb(config.kb_coho_path, KBKind.COHO)
    return CohortPipeline(
        backend=backend,
        llm=llm,
        embedder=embedder,
        vocab_index=vocab_index,
        entity_detector=detector,
        ask_entries=ask_entries,
        coho_entries=coho_entries,
        retrieval_cfg=RetrievalConfig(k=config.retrieval_k),
        healing_cfg=HealingConfig(max_iterations=config.max_heal_iterations),
        verifier=llm if config.use_verifier else None,
        prompt_budget_chars=config.prompt_budget_chars,
    )

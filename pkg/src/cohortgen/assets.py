"""Access to packaged data assets (KB files, vocabulary fixtures)."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

ASK_KB_FILENAME = "epi_ask_kb.jsonl"
COHO_KB_FILENAME = "epi_coho_kb.jsonl"
CONCEPTS_FILENAME = "concepts.tsv"
SYNONYMS_FILENAME = "concept_synonyms.tsv"


def data_path(filename: str) -> Path:
    """Filesystem path of a packaged data file."""
    ref = resources.files("cohortgen").joinpath("data", filename)
    path = Path(str(ref))
    if not path.exists():
        raise FileNotFoundError(f"packaged data file not found: {filename}")
    return path


def ask_kb_path() -> Path:
    return data_path(ASK_KB_FILENAME)


def coho_kb_path() -> Path:
    return data_path(COHO_KB_FILENAME)


def concepts_path() -> Path:
    return data_path(CONCEPTS_FILENAME)


def synonyms_path() -> Path:
    return data_path(SYNONYMS_FILENAME)

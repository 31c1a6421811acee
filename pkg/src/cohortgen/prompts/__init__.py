"""Versioned prompt template assets."""

from __future__ import annotations

import functools
from importlib import resources


@functools.lru_cache(maxsize=None)
def load_prompt(name: str) -> str:
    """Load a prompt template by base name (without extension)."""
    ref = resources.files(__package__).joinpath(f"{name}.txt")
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"unknown prompt template: {name}") from None

"""LLM provider interface with a deterministic mock for hermetic runs.

A request is an ordered list of (role, text) messages plus sampling
parameters; a response is text. The mock provider replays a transcript
keyed by request fingerprint, by substring match, or by ordinal turn,
which lets end-to-end tests script entire pipeline conversations.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path


class ProviderError(RuntimeError):
    """Provider failure (network, schema, exhausted transcript); retriable."""


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    content: str


def fingerprint_messages(messages: list[Message]) -> str:
    """Stable 16-hex-digit fingerprint of an ordered message list."""
    payload = json.dumps(
        [[m.role, m.content] for m in messages], ensure_ascii=False, separators=(",", ":")
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class LLMProvider:
    """Interface for text completion providers."""

    name: str = "llm"

    def complete(self, messages: list[Message], temperature: float = 0.0) -> str:
        raise NotImplementedError


@dataclass
class TranscriptTurn:
    response: str
    fingerprint: str | None = None
    contains: str | None = None
    used: bool = False


class MockLLMProvider(LLMProvider):
    """Replays canned responses from a transcript.

    Turn resolution order for each request:
      1. a turn whose fingerprint equals the request fingerprint;
      2. the first turn whose `contains` string occurs in the last user
         message;
      3. the next unused turn with no matcher (ordinal fallback).

    Fingerprint and contains turns are reusable; ordinal turns are
    consumed in order. Contains keys should be specific enough to
    discriminate requests within one scripted conversation.
    """

    name = "mock"

    def __init__(self, turns: list[TranscriptTurn]):
        self.turns = turns
        self.requests: list[list[Message]] = []

    @classmethod
    def from_responses(cls, responses: list[str]) -> "MockLLMProvider":
        return cls([TranscriptTurn(response=r) for r in responses])

    @classmethod
    def from_transcript_file(cls, path: str | Path) -> "MockLLMProvider":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        turns = [
            TranscriptTurn(
                response=t["response"],
                fingerprint=t.get("fingerprint"),
                contains=t.get("contains"),
            )
            for t in data["turns"]
        ]
        return cls(turns)

    def complete(self, messages: list[Message], temperature: float = 0.0) -> str:
        self.requests.append(list(messages))
        fp = fingerprint_messages(messages)
        for turn in self.turns:
            if turn.fingerprint == fp:
                return turn.response
        last_user = next(
            (m.content for m in reversed(messages) if m.role == "user"), ""
        )
        for turn in self.turns:
            if turn.contains and turn.contains in last_user:
                return turn.response
        for turn in self.turns:
            if turn.fingerprint is None and turn.contains is None and not turn.used:
                turn.used = True
                return turn.response
        raise ProviderError(f"transcript has no response for request {fp}")


class CallbackLLMProvider(LLMProvider):
    """Wraps a function (messages -> text); used to script healing loops."""

    name = "callback"

    def __init__(self, fn):
        self._fn = fn

    def complete(self, messages: list[Message], temperature: float = 0.0) -> str:
        return self._fn(messages)


@dataclass
class HttpLLMConfig:
    name: str
    model: str
    endpoint: str
    api_key_env: str = ""
    timeout: float = 120.0


class HttpLLMProvider(LLMProvider):
    """Chat-completions-style HTTP provider."""

    def __init__(self, config: HttpLLMConfig):
        self.config = config
        self.name = config.name

    def complete(self, messages: list[Message], temperature: float = 0.0) -> str:
        import httpx

        headers = {}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if not key:
                raise ProviderError(
                    f"credential env var {self.config.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self.config.model,
            "temperature": temperature,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
        }
        try:
            resp = httpx.post(
                self.config.endpoint, json=body, headers=headers, timeout=self.config.timeout
            )
            resp.raise_for_status()
            return resp.json()["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ProviderError(f"completion request failed: {exc}") from exc

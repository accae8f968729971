"""Narrow language-model client: send messages, receive streamed text.

The pipeline only ever needs this one capability, so the client is a small
interface with two implementations: a live HTTP client and a replay client
fed from recorded fixtures.  Replay mode performs no network operations at
all, which keeps the test suite hermetic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterator

from .errors import FixtureMissError

_CHUNK = 16  # replay streams in small chunks to exercise the streaming path


@dataclass
class LlmClientConfig:
    mode: str = "off"  # "live" | "replay" | "off"
    endpoint: str | None = None
    api_key: str | None = None
    model: str = "gpt-4"
    fixture_path: str | None = None

    @classmethod
    def from_env(cls) -> "LlmClientConfig":
        return cls(
            mode=os.environ.get("FLOWLENS_LLM_MODE", "off"),
            endpoint=os.environ.get("FLOWLENS_LLM_ENDPOINT"),
            api_key=os.environ.get("FLOWLENS_LLM_KEY"),
            model=os.environ.get("FLOWLENS_LLM_MODEL", "gpt-4"),
            fixture_path=os.environ.get("FLOWLENS_FIXTURE"),
        )


class ReplayLlmClient:
    """Plays back recorded responses in call order; never touches the network."""

    def __init__(self, fixture):
        if isinstance(fixture, (str, os.PathLike)):
            with open(fixture) as handle:
                fixture = json.load(handle)
        responses = fixture.get("responses", [])
        self._responses = [
            r["text"] if isinstance(r, dict) else str(r) for r in responses
        ]
        self._cursor = 0

    def complete(self, messages) -> Iterator[str]:
        if self._cursor >= len(self._responses):
            raise FixtureMissError(
                f"replay fixture exhausted after {self._cursor} responses"
            )
        text = self._responses[self._cursor]
        self._cursor += 1
        for i in range(0, len(text), _CHUNK):
            yield text[i : i + _CHUNK]


class LiveLlmClient:
    """Minimal chat-completion client for an OpenAI-compatible endpoint."""

    def __init__(self, config: LlmClientConfig):
        if not config.endpoint:
            raise ValueError("live mode requires an endpoint")
        self.config = config

    def complete(self, messages) -> Iterator[str]:
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        response = httpx.post(
            self.config.endpoint.rstrip("/") + "/chat/completions",
            json={"model": self.config.model, "messages": list(messages)},
            headers=headers,
            timeout=120,
        )
        response.raise_for_status()
        text = response.json()["choices"][0]["message"]["content"]
        yield text


def make_client(config: LlmClientConfig):
    """Client for the configured mode; None when language-model access is off."""
    if config.mode == "replay":
        if not config.fixture_path:
            raise ValueError("replay mode requires a fixture path")
        return ReplayLlmClient(config.fixture_path)
    if config.mode == "live":
        return LiveLlmClient(config)
    return None

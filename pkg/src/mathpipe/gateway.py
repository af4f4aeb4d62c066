"""One client abstraction for every LLM call in the pipeline.

Two backends: an OpenAI-compatible chat-completions HTTP endpoint, and a
deterministic replay mock keyed by request_tag for tests and reproducible
runs. Retries with exponential backoff + jitter, bounded in-flight
concurrency per gateway instance.
"""

from __future__ import annotations

import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Iterable

import requests


class FinishReason(Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]  # (role, text)
    max_tokens: int = 2048
    temperature: float = 0.0
    request_tag: str = ""

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        roles = [r for r, _ in self.messages]
        non_system = [r for r in roles if r != "system"]
        if non_system and non_system[0] != "user":
            raise ValueError("first non-system message must be from the user")
        for role, _ in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"bad role {role!r}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason
    usage: tuple[int, int] = (0, 0)  # (prompt_tokens, completion_tokens)


@dataclass(frozen=True)
class BackendConfig:
    kind: str  # "http_openai_compatible" | "replay_mock"
    base_url: str = ""
    api_key_env: str = ""
    max_in_flight: int = 4
    max_attempts: int = 3
    base_backoff_ms: int = 100
    fixture_path: str = ""  # replay_mock only

    def __post_init__(self):
        if self.kind not in ("http_openai_compatible", "replay_mock"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


class TransportError(RuntimeError):
    """Transient failures exhausted all retry attempts."""


class RequestError(RuntimeError):
    """Non-retriable client-side failure (4xx other than 429)."""


class MockMissError(KeyError):
    def __init__(self, request_tag: str):
        super().__init__(request_tag)
        self.request_tag = request_tag

    def __str__(self):
        return f"no recorded response for request_tag {self.request_tag!r}"


class Gateway:
    """Thread-safe client; owns the in-flight semaphore for its backend."""

    def __init__(self, cfg: BackendConfig, sleep=time.sleep, rng: random.Random | None = None):
        self.cfg = cfg
        self._semaphore = threading.Semaphore(cfg.max_in_flight)
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._fixture: dict[str, ChatResponse] | None = None
        if cfg.kind == "replay_mock":
            self._fixture = {}
            if cfg.fixture_path:
                self._fixture = load_fixture(Path(cfg.fixture_path))

    def add_replay(self, tag: str, text: str, finish: FinishReason = FinishReason.STOP):
        if self._fixture is None:
            raise ValueError("not a replay_mock gateway")
        self._fixture[tag] = ChatResponse(text=text, finish_reason=finish)

    def complete(self, req: ChatRequest) -> ChatResponse:
        with self._semaphore:
            if self.cfg.kind == "replay_mock":
                return self._complete_replay(req)
            return self._complete_http(req)

    def _complete_replay(self, req: ChatRequest) -> ChatResponse:
        assert self._fixture is not None
        try:
            return self._fixture[req.request_tag]
        except KeyError:
            raise MockMissError(req.request_tag) from None

    def _complete_http(self, req: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key_env:
            key = os.environ.get(self.cfg.api_key_env)
            if not key:
                raise RequestError(f"API key env var {self.cfg.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": req.model_id,
            "messages": [{"role": r, "content": t} for r, t in req.messages],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        last_error = "no attempt made"
        for attempt in range(self.cfg.max_attempts):
            if attempt:
                backoff = self.cfg.base_backoff_ms / 1000.0 * (2 ** (attempt - 1))
                self._sleep(backoff * (1.0 + self._rng.random()))
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=120)
            except requests.RequestException as exc:
                last_error = f"transport: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise RequestError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            body = resp.json()
            choice = body["choices"][0]
            usage = body.get("usage", {})
            return ChatResponse(
                text=choice["message"]["content"],
                finish_reason=FinishReason(choice.get("finish_reason", "stop")),
                usage=(usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0)),
            )
        raise TransportError(
            f"exhausted {self.cfg.max_attempts} attempts for {req.request_tag!r}: {last_error}"
        )


# --- record/replay fixtures ---------------------------------------------
# Fixture file: JSONL of {"tag": str, "response": str, "finish": str}


def record_replay(session: Iterable[tuple[ChatRequest, ChatResponse]], out: IO[str]) -> int:
    seen: set[str] = set()
    count = 0
    for req, resp in session:
        if req.request_tag in seen:
            raise ValueError(f"duplicate request_tag {req.request_tag!r}")
        seen.add(req.request_tag)
        out.write(
            json.dumps(
                {
                    "tag": req.request_tag,
                    "response": resp.text,
                    "finish": resp.finish_reason.value,
                },
                ensure_ascii=False,
            )
            + "\n"
        )
        count += 1
    return count


def load_fixture(path: Path) -> dict[str, ChatResponse]:
    fixture: dict[str, ChatResponse] = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["tag"] in fixture:
                raise ValueError(f"duplicate request_tag {rec['tag']!r} in fixture")
            fixture[rec["tag"]] = ChatResponse(
                text=rec["response"], finish_reason=FinishReason(rec.get("finish", "stop"))
            )
    return fixture


def replay_gateway(fixture: dict[str, str] | Path) -> Gateway:
    """Convenience constructor for tests: tag -> response text."""
    if isinstance(fixture, Path):
        gw = Gateway(BackendConfig(kind="replay_mock", fixture_path=str(fixture)))
        return gw
    gw = Gateway(BackendConfig(kind="replay_mock"))
    for tag, text in fixture.items():
        gw.add_replay(tag, text)
    return gw

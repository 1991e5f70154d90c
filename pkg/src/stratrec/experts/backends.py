"""Text-expert backends: a remote chat-completions client and scripted mocks.

Both expose one method, ``complete(prompt) -> str``. The remote backend
speaks the common chat-completions JSON shape (or a single-completion text
shape via ``protocol="completion"``), retries transport failures, and
enforces a process-wide in-flight request cap. Mocks are fully
deterministic and record every prompt they see, which the tests use as a
call log.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import requests


class ExpertUnavailableError(RuntimeError):
    def __init__(self, message: str, attempts: int = 0, context: Optional[str] = None):
        detail = f"{message} (attempts={attempts}" + (f", {context}" if context else "") + ")"
        super().__init__(detail)
        self.attempts = attempts
        self.context = context


class TextBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


_INFLIGHT_LOCK = threading.Lock()
_inflight_sem = threading.BoundedSemaphore(8)


def set_inflight_cap(cap: int) -> None:
    """Resize the global cap on concurrent remote requests."""
    global _inflight_sem
    if cap < 1:
        raise ValueError("in-flight cap must be >= 1")
    with _INFLIGHT_LOCK:
        _inflight_sem = threading.BoundedSemaphore(cap)


@dataclass
class RemoteBackend:
    """Chat-completions-style HTTP client with retries and timeouts."""

    endpoint: str
    model: str
    auth_env: Optional[str] = None  # name of the env var holding the bearer token
    temperature: float = 0.7
    timeout: float = 30.0
    max_retries: int = 2
    max_tokens: int = 512
    protocol: str = "chat"  # "chat" | "completion"
    retry_backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("retries must be >= 0")
        if self.protocol not in ("chat", "completion"):
            raise ValueError(f"unknown protocol: {self.protocol}")
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env, "")
            if not token:
                raise ExpertUnavailableError(f"auth env var {self.auth_env} is empty or unset")
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, prompt: str) -> dict:
        if self.protocol == "chat":
            return {
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            }
        return {
            "model": self.model,
            "prompt": prompt,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    def _extract(self, body: dict) -> str:
        try:
            choice = body["choices"][0]
            if self.protocol == "chat":
                return choice["message"]["content"]
            return choice["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ExpertUnavailableError(f"malformed completion response: {exc}") from exc

    def complete(self, prompt: str) -> str:
        attempts = self.max_retries + 1
        last_error: Optional[Exception] = None
        for attempt in range(attempts):
            if attempt and self.retry_backoff:
                time.sleep(self.retry_backoff * attempt)
            try:
                with _inflight_sem:
                    resp = self._session.post(
                        self.endpoint,
                        json=self._payload(prompt),
                        headers=self._headers(),
                        timeout=self.timeout,
                    )
                resp.raise_for_status()
                return self._extract(resp.json())
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise ExpertUnavailableError(
            f"remote expert failed after {attempts} attempts: {last_error}",
            attempts=attempts,
        )


@dataclass
class MockBackend:
    """Deterministic scripted backend.

    Reply resolution order: ``rules`` (first substring match against the
    prompt wins), then the next entry of ``replies`` (the final entry
    repeats once exhausted), then ``echo`` (return the prompt itself),
    then ``default``. ``seed`` is kept for config parity; mocks are
    deterministic regardless.
    """

    replies: Optional[Sequence[str]] = None
    rules: Optional[Sequence[tuple[str, str]]] = None
    echo: bool = False
    default: Optional[str] = None
    seed: int = 0
    calls: list[str] = field(default_factory=list)
    _cursor: int = 0

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        if self.rules:
            for needle, reply in self.rules:
                if needle in prompt:
                    return reply
        if self.replies is not None:
            if not len(self.replies):
                raise ExpertUnavailableError("mock backend has no scripted replies")
            reply = self.replies[min(self._cursor, len(self.replies) - 1)]
            self._cursor += 1
            return reply
        if self.echo:
            return prompt
        if self.default is not None:
            return self.default
        raise ExpertUnavailableError("mock backend has no reply for prompt")

    def reset(self) -> None:
        self._cursor = 0
        self.calls.clear()

"""Minimal chat-completion client with retry, backoff and an in-flight cap.

The endpoint speaks the common JSON chat-completion shape: POST
``<base_url>/chat/completions`` with ``{"model", "messages", "temperature"}``,
answer text at ``choices[0].message.content``.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

import httpx

from .errors import AuthError, InvalidConfig, TransportError

log = logging.getLogger(__name__)

ENV_BASE_URL = "ICDRR_LLM_BASE_URL"
ENV_API_KEY = "ICDRR_LLM_API_KEY"
DEFAULT_MODEL = "gpt-3.5-turbo"


@dataclass(frozen=True)
class ChatExchange:
    endpoint_url: str
    model_name: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0

    def __post_init__(self):
        roles = [role for role, _ in self.messages]
        if sorted(roles) != ["system", "user"]:
            raise ValueError(f"exchange needs one system and one user message, got {roles}")

    def payload(self) -> dict:
        return {
            "model": self.model_name,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }


@dataclass
class ClientConfig:
    base_url: Optional[str] = None
    api_key: Optional[str] = field(default=None, repr=False)
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    timeout: float = 30.0
    attempts: int = 3
    backoff_base: float = 1.0
    backoff_factor: float = 2.0
    max_inflight: int = 4
    transcript_path: Optional[Path] = None

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        cfg = cls(base_url=os.environ.get(ENV_BASE_URL), api_key=os.environ.get(ENV_API_KEY))
        for key, value in overrides.items():
            if value is not None:
                setattr(cfg, key, value)
        return cfg

    @property
    def chat_url(self) -> str:
        if not self.base_url:
            raise InvalidConfig(f"no chat endpoint configured (set {ENV_BASE_URL})")
        return self.base_url.rstrip("/") + "/chat/completions"


class _Transient(Exception):
    pass


class ChatClient:
    """Thread-safe client; at most ``config.max_inflight`` requests run at once."""

    def __init__(self, config: ClientConfig, sleep: Callable[[float], None] = time.sleep):
        if config.max_inflight < 1:
            raise InvalidConfig("max_inflight must be at least 1")
        self.config = config
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(config.max_inflight)
        self._http = httpx.Client(timeout=config.timeout)
        self._transcript_lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def complete(self, exchange: ChatExchange) -> str:
        if not self.config.api_key:
            raise AuthError(f"no API key ({ENV_API_KEY} is unset)")
        delay = self.config.backoff_base
        last: Optional[Exception] = None
        for attempt in range(1, self.config.attempts + 1):
            try:
                with self._slots:
                    return self._post(exchange, attempt)
            except _Transient as exc:
                last = exc
                log.warning("chat request attempt %d/%d failed: %s", attempt, self.config.attempts, exc)
                if attempt < self.config.attempts:
                    self._sleep(delay)
                    delay *= self.config.backoff_factor
        raise TransportError(f"chat request failed after {self.config.attempts} attempts: {last}")

    def _post(self, exchange: ChatExchange, attempt: int) -> str:
        headers = {"Authorization": f"Bearer {self.config.api_key}"}
        try:
            resp = self._http.post(exchange.endpoint_url, json=exchange.payload(), headers=headers)
        except httpx.TransportError as exc:
            self._record(exchange, attempt, None, repr(exc))
            raise _Transient(repr(exc)) from exc
        if resp.status_code in (401, 403):
            self._record(exchange, attempt, resp.status_code, None)
            raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            self._record(exchange, attempt, resp.status_code, None)
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            self._record(exchange, attempt, resp.status_code, None)
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            self._record(exchange, attempt, resp.status_code, None)
            raise TransportError(f"unexpected response body: {resp.text[:200]}") from exc
        content = content or ""
        self._record(exchange, attempt, resp.status_code, content)
        return content

    def _record(self, exchange: ChatExchange, attempt: int, status: Optional[int], content: Optional[str]):
        path = self.config.transcript_path
        if path is None:
            return
        line = {
            "time": datetime.now(timezone.utc).isoformat(),
            "url": exchange.endpoint_url,
            "request": exchange.payload(),
            "attempt": attempt,
            "status": status,
            "response": content,
        }
        with self._transcript_lock, open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")

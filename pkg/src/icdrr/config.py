"""Service configuration.

Config file grammar (UTF-8, one setting per line)::

    line    := blank | comment | setting
    comment := optional whitespace, '#', anything
    setting := key '=' value      (whitespace around key and value is ignored;
                                   a value wrapped in matching quotes is unwrapped)

Sources, strongest first: explicit overrides (CLI flags), environment variables
``ICDRR_<KEY>`` (upper case), the config file (``ICDRR_CONFIG`` or an explicit
path), built-in defaults. API keys are read from the environment only.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from .errors import ConfigError, InvalidConfig
from .llm import DEFAULT_MODEL, ENV_API_KEY, ClientConfig
from .pipeline import PipelineConfig, Reranker
from .retrieval import Scorer

ENV_CONFIG = "ICDRR_CONFIG"
ENV_PREFIX = "ICDRR_"
SECRET_KEYS = {"llm_api_key", "api_key"}


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise ValueError("must be >= 1")
    return n


def _bind(value: str) -> str:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
        raise ValueError("expected host:port")
    return value


KEYS: dict[str, Callable[[str], Any]] = {
    "bind": _bind,
    "corpus": str,
    "index": str,
    "k": _positive_int,
    "scorer": Scorer,
    "reranker": Reranker,
    "seed": int,
    "llm_base_url": str,
    "llm_model": str,
    "llm_api_key_env": str,
    "llm_timeout": float,
    "llm_attempts": _positive_int,
    "max_inflight_rerank": _positive_int,
    "transcript": str,
}

DEFAULTS: dict[str, Any] = {
    "bind": "127.0.0.1:8080",
    "corpus": None,
    "index": None,
    "k": 15,
    "scorer": Scorer.BM25,
    "reranker": Reranker.LEXICAL,
    "seed": 42,
    "llm_base_url": None,
    "llm_model": DEFAULT_MODEL,
    "llm_api_key_env": ENV_API_KEY,
    "llm_timeout": 30.0,
    "llm_attempts": 3,
    "max_inflight_rerank": 4,
    "transcript": None,
}


@dataclass(frozen=True)
class LlmEndpoint:
    url: Optional[str] = None
    model: str = DEFAULT_MODEL
    key_env: str = ENV_API_KEY
    timeout: float = 30.0
    attempts: int = 3
    transcript: Optional[str] = None


@dataclass(frozen=True)
class ServiceConfig:
    bind_address: str = DEFAULTS["bind"]
    corpus_path: Optional[Path] = None
    index_path: Optional[Path] = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    llm: LlmEndpoint = field(default_factory=LlmEndpoint)
    max_inflight_rerank: int = 4

    @property
    def host(self) -> str:
        return self.bind_address.rpartition(":")[0]

    @property
    def port(self) -> int:
        return int(self.bind_address.rpartition(":")[2])

    def client_config(self, env: Mapping[str, str] = os.environ) -> ClientConfig:
        return ClientConfig(
            base_url=self.llm.url,
            api_key=env.get(self.llm.key_env),
            model=self.llm.model,
            timeout=self.llm.timeout,
            attempts=self.llm.attempts,
            max_inflight=self.max_inflight_rerank,
            transcript_path=Path(self.llm.transcript) if self.llm.transcript else None,
        )

    def check_paths(self) -> None:
        for key, path in (("corpus", self.corpus_path), ("index", self.index_path)):
            if path is None:
                raise ConfigError(key, "required")
            if not Path(path).exists():
                raise ConfigError(key, f"path {path} does not exist")


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise ConfigError(key or f"line {line_no}", "expected 'key = value'")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            value = value[1:-1]
        values[key] = value
    return values


def _coerce(key: str, value: Any) -> Any:
    if key in SECRET_KEYS:
        raise ConfigError(key, "secrets must come from the environment, not config")
    if key not in KEYS:
        raise ConfigError(key, "unknown key")
    if not isinstance(value, str):
        return value
    try:
        return KEYS[key](value)
    except ValueError as exc:
        raise ConfigError(key, f"invalid value {value!r} ({exc})") from None


def load_config(
    path=None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ServiceConfig:
    env = os.environ if env is None else env
    merged = dict(DEFAULTS)

    path = path or env.get(ENV_CONFIG)
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        for key, value in parse_config_text(text).items():
            merged[key] = _coerce(key, value)

    for key in KEYS:
        name = ENV_PREFIX + key.upper()
        if name in env and env[name] != "":
            merged[key] = _coerce(key, env[name])

    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = _coerce(key, value)

    try:
        pipeline = PipelineConfig(merged["k"], merged["scorer"], merged["reranker"], merged["seed"])
    except InvalidConfig as exc:
        raise ConfigError("k", str(exc)) from None
    return ServiceConfig(
        bind_address=merged["bind"],
        corpus_path=Path(merged["corpus"]) if merged["corpus"] else None,
        index_path=Path(merged["index"]) if merged["index"] else None,
        pipeline=pipeline,
        llm=LlmEndpoint(
            merged["llm_base_url"], merged["llm_model"], merged["llm_api_key_env"],
            merged["llm_timeout"], merged["llm_attempts"], merged["transcript"],
        ),
        max_inflight_rerank=merged["max_inflight_rerank"],
    )

"""The two prediction arms: retrieve-then-rerank, and the direct LLM baseline."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional

from .corpus import CodeTable, IcdCode
from .errors import InvalidConfig, NoCodeFound, RerankFailed
from .llm import ChatClient, ChatExchange
from .rerank import SYSTEM_PROMPT, RerankRequest, find_codes, lexical_rerank, llm_rerank
from .retrieval import DEFAULT_K, Candidate, InvertedIndex, Scorer, retrieve_topk
from .retrieval.maxsim import DEFAULT_SEED


class Reranker(str, enum.Enum):
    LLM = "llm"
    LEXICAL = "lexical"


@dataclass(frozen=True)
class PipelineConfig:
    k: int = DEFAULT_K
    scorer: Scorer = Scorer.BM25
    reranker: Reranker = Reranker.LEXICAL
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.k < 1:
            raise InvalidConfig("k must be at least 1")
        object.__setattr__(self, "scorer", Scorer(self.scorer))
        object.__setattr__(self, "reranker", Reranker(self.reranker))


@dataclass(frozen=True)
class Prediction:
    query: str
    chosen: Optional[IcdCode]
    candidates: tuple[Candidate, ...] = ()
    rerank_raw: str = ""
    fallback_used: bool = False
    no_candidates: bool = False
    elapsed_ms: int = 0
    error: Optional[str] = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "chosen": self.chosen.normalized if self.chosen else None,
            "candidates": [c.to_dict() for c in self.candidates],
            "rerank_raw": self.rerank_raw,
            "fallback_used": self.fallback_used,
            "no_candidates": self.no_candidates,
            "elapsed_ms": self.elapsed_ms,
            **({"error": self.error} if self.error else {}),
        }


def _ms_since(start: float) -> int:
    return int(round((time.perf_counter() - start) * 1000))


def predict_retrieve_rank(
    query: str,
    index: InvertedIndex,
    table: CodeTable,
    config: PipelineConfig = PipelineConfig(),
    client: Optional[ChatClient] = None,
) -> Prediction:
    """Retrieve top-k candidates, then let the configured reranker choose one.

    Raises :class:`~icdrr.errors.EmptyQuery` for token-less queries and
    :class:`~icdrr.errors.RerankFailed` (carrying the candidates) when the LLM
    reranker cannot be reached.
    """
    start = time.perf_counter()
    candidates = retrieve_topk(index, query, config.k, config.scorer)
    if not candidates:
        return Prediction(query, None, (), no_candidates=True, elapsed_ms=_ms_since(start))
    request = RerankRequest(
        query, tuple((c.code, table[c.code].long_description) for c in candidates)
    )
    if config.reranker is Reranker.LLM:
        if client is None:
            raise InvalidConfig("LLM reranker selected but no chat client configured")
        try:
            decision = llm_rerank(request, client)
        except Exception as exc:
            raise RerankFailed(exc, candidates) from exc
    else:
        decision = lexical_rerank(request)
    return Prediction(
        query,
        decision.chosen,
        tuple(candidates),
        decision.raw_response,
        decision.fallback_used,
        elapsed_ms=_ms_since(start),
    )


def vanilla_exchange(query: str, client: ChatClient) -> ChatExchange:
    return ChatExchange(
        endpoint_url=client.config.chat_url,
        model_name=client.config.model,
        messages=(("system", SYSTEM_PROMPT), ("user", query)),
        temperature=0.0,
    )


def predict_vanilla(query: str, client: ChatClient) -> Prediction:
    """Direct prediction; the first well-formed code in the answer is taken as-is."""
    start = time.perf_counter()
    text = client.complete(vanilla_exchange(query, client))
    chosen = next(find_codes(text), None)
    return Prediction(
        query,
        chosen,
        (),
        text,
        elapsed_ms=_ms_since(start),
        error=None if chosen else str(NoCodeFound(text)),
    )

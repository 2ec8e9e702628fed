"""Second stage: pick one code out of the retrieved candidates."""

from __future__ import annotations

import re
import time
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .corpus import IcdCode, normalize_code
from .errors import MalformedCode, NoCodeFound
from .llm import DEFAULT_MODEL, ChatClient, ChatExchange
from .retrieval.tokens import token_texts

SYSTEM_PROMPT = "You are a medical coding expert that can suggest an ICD-10-CM code for a given query."
ANSWER_INSTRUCTION = "Answer with exactly one ICD-10-CM code from the list above and nothing else."

# code-shaped tokens in free text, optional period after the category
_CODE_IN_TEXT = re.compile(
    r"(?<![A-Za-z0-9.])([A-TV-Z][0-9][A-Z0-9](?:\.?[A-Z0-9]{1,4})?)(?![A-Za-z0-9])",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class RerankRequest:
    query: str
    candidates: tuple[tuple[IcdCode, str], ...]
    instructions: str = SYSTEM_PROMPT

    def __post_init__(self):
        if not self.candidates:
            raise ValueError("rerank request needs at least one candidate")
        for code, _ in self.candidates:
            if not isinstance(code, IcdCode):
                raise TypeError(f"candidate code {code!r} is not an IcdCode")

    @property
    def codes(self) -> list[IcdCode]:
        return [c for c, _ in self.candidates]


@dataclass(frozen=True)
class RerankDecision:
    chosen: IcdCode
    raw_response: str
    latency_ms: int
    fallback_used: bool = False


def build_rerank_prompt(
    req: RerankRequest,
    endpoint_url: str = "",
    model: str = DEFAULT_MODEL,
) -> ChatExchange:
    lines = [f"Query: {req.query}", "", "Candidate ICD-10-CM codes:"]
    for i, (code, description) in enumerate(req.candidates, start=1):
        lines.append(f"{i}. {code.normalized} — {description}")
    lines += ["", ANSWER_INSTRUCTION]
    return ChatExchange(
        endpoint_url=endpoint_url,
        model_name=model,
        messages=(("system", req.instructions), ("user", "\n".join(lines))),
        temperature=0.0,
    )


def find_codes(text: str) -> Iterator[IcdCode]:
    """Yield every grammar-valid code mentioned in ``text``, in order."""
    for m in _CODE_IN_TEXT.finditer(text or ""):
        try:
            yield normalize_code(m.group(1))
        except MalformedCode:
            continue


def parse_code_from_response(text: str, allowed: Iterable[IcdCode]) -> IcdCode:
    allowed = {c.normalized if isinstance(c, IcdCode) else normalize_code(c).normalized for c in allowed}
    if not allowed:
        raise ValueError("allowed code set is empty")
    for code in find_codes(text):
        if code.normalized in allowed:
            return code
    raise NoCodeFound(text)


def llm_rerank(req: RerankRequest, client: ChatClient) -> RerankDecision:
    """Ask the chat model to choose; unparseable answers fall back to rank 1."""
    exchange = build_rerank_prompt(req, client.config.chat_url, client.config.model)
    start = time.perf_counter()
    text = client.complete(exchange)
    latency = int(round((time.perf_counter() - start) * 1000))
    try:
        chosen = parse_code_from_response(text, req.codes)
        return RerankDecision(chosen, text, latency)
    except NoCodeFound:
        return RerankDecision(req.candidates[0][0], text, latency, fallback_used=True)


def token_f1(query_tokens: Sequence[str], doc_tokens: Sequence[str]) -> float:
    if not query_tokens or not doc_tokens:
        return 0.0
    overlap = sum((Counter(query_tokens) & Counter(doc_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(doc_tokens)
    recall = overlap / len(query_tokens)
    return 2 * precision * recall / (precision + recall)


def lexical_rerank(req: RerankRequest) -> RerankDecision:
    """Highest token F1 against the query; ties go to the better retrieval rank, then the lower code."""
    start = time.perf_counter()
    q = token_texts(req.query)
    scored = [
        (token_f1(q, token_texts(desc)), rank, code)
        for rank, (code, desc) in enumerate(req.candidates)
    ]
    best = min(scored, key=lambda s: (-s[0], s[1], s[2].normalized))
    trace = "lexical-f1 " + " ".join(f"{code.normalized}={f1:.4f}" for f1, _, code in scored)
    latency = int(round((time.perf_counter() - start) * 1000))
    return RerankDecision(best[2], trace, latency)


def rerank_candidates(req: RerankRequest, client: Optional[ChatClient] = None) -> RerankDecision:
    """Dispatch to the LLM reranker when a client is given, else the lexical one."""
    if client is None:
        return lexical_rerank(req)
    return llm_rerank(req, client)

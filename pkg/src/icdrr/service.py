"""HTTP+JSON service around the retrieval engine and pipeline.

Endpoints:

    GET  /health       -> {"status": "ok", "index_docs": N}   (503 while loading)
    POST /v1/retrieve  {"query", "k"?, "scorer"?}              -> candidate list
    POST /v1/predict   {"query", "k"?, "scorer"?, "reranker"?} -> prediction

400 for a malformed body, 422 for an empty query, 503 while the index loads.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
from contextlib import asynccontextmanager
from typing import Any, Callable, Optional

import uvicorn
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from starlette.concurrency import run_in_threadpool

from .config import ServiceConfig
from .corpus import CodeTable, load_table
from .errors import BindError, EmptyQuery, RerankFailed
from .llm import ChatClient
from .pipeline import PipelineConfig, Reranker, predict_retrieve_rank
from .retrieval import InvertedIndex, Scorer, load_index, retrieve_topk

log = logging.getLogger(__name__)


class _BadRequest(Exception):
    pass


class ServiceState:
    def __init__(self):
        self.status = "loading"
        self.error: Optional[BaseException] = None
        self.index: Optional[InvertedIndex] = None
        self.table: Optional[CodeTable] = None
        self.client: Optional[ChatClient] = None
        self.ready = threading.Event()


def default_loader(config: ServiceConfig) -> tuple[InvertedIndex, CodeTable]:
    table = load_table(config.corpus_path)
    index = load_index(config.index_path)
    if index.source_digest and index.source_digest != table.source_digest:
        log.warning("index was built from a different corpus file than %s", config.corpus_path)
    return index, table


def _parse_body(raw: bytes, allowed: set[str]) -> dict[str, Any]:
    try:
        body = json.loads(raw or b"")
    except (ValueError, UnicodeDecodeError):
        raise _BadRequest("body is not valid JSON")
    if not isinstance(body, dict):
        raise _BadRequest("body must be a JSON object")
    unknown = set(body) - allowed
    if unknown:
        raise _BadRequest(f"unknown fields {sorted(unknown)}")
    if not isinstance(body.get("query"), str):
        raise _BadRequest("'query' must be a string")
    k = body.get("k")
    if k is not None and (isinstance(k, bool) or not isinstance(k, int) or k < 1):
        raise _BadRequest("'k' must be a positive integer")
    for key, enum_type in (("scorer", Scorer), ("reranker", Reranker)):
        if body.get(key) is not None:
            try:
                body[key] = enum_type(body[key])
            except ValueError:
                raise _BadRequest(f"invalid {key} {body[key]!r}")
    return body


def create_app(
    config: ServiceConfig,
    loader: Callable[[ServiceConfig], tuple[InvertedIndex, CodeTable]] = default_loader,
    on_load_failure: Optional[Callable[[BaseException], None]] = None,
) -> FastAPI:
    state = ServiceState()

    def load():
        try:
            state.index, state.table = loader(config)
            client_cfg = config.client_config()
            if client_cfg.base_url and client_cfg.api_key:
                state.client = ChatClient(client_cfg)
            state.status = "ok"
            log.info("index loaded: %d documents", state.index.doc_count)
        except BaseException as exc:  # noqa: BLE001 - reported to the caller of serve()
            state.status = "failed"
            state.error = exc
            log.error("startup failed: %s", exc)
            if on_load_failure:
                on_load_failure(exc)
        finally:
            state.ready.set()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        threading.Thread(target=load, name="icdrr-loader", daemon=True).start()
        yield
        if state.client:
            state.client.close()

    app = FastAPI(title="icdrr", lifespan=lifespan)
    app.state.icdrr = state

    def unavailable() -> Optional[JSONResponse]:
        if state.status == "ok":
            return None
        return JSONResponse({"status": state.status}, status_code=503)

    @app.exception_handler(_BadRequest)
    async def bad_request(request: Request, exc: _BadRequest):
        return JSONResponse({"error": str(exc)}, status_code=400)

    @app.exception_handler(EmptyQuery)
    async def empty_query(request: Request, exc: EmptyQuery):
        return JSONResponse({"error": "query is empty"}, status_code=422)

    @app.get("/health")
    async def health():
        if state.status != "ok":
            return JSONResponse({"status": state.status}, status_code=503)
        return {"status": "ok", "index_docs": state.index.doc_count}

    @app.post("/v1/retrieve")
    async def retrieve(request: Request):
        body = _parse_body(await request.body(), {"query", "k", "scorer"})
        if (resp := unavailable()) is not None:
            return resp
        k = body.get("k") or config.pipeline.k
        scorer = body.get("scorer") or config.pipeline.scorer
        candidates = await run_in_threadpool(retrieve_topk, state.index, body["query"], k, scorer)
        return {
            "query": body["query"],
            "k": k,
            "scorer": scorer.value,
            "candidates": [c.to_dict() for c in candidates],
        }

    @app.post("/v1/predict")
    async def predict(request: Request):
        body = _parse_body(await request.body(), {"query", "k", "scorer", "reranker"})
        if (resp := unavailable()) is not None:
            return resp
        pcfg = PipelineConfig(
            k=body.get("k") or config.pipeline.k,
            scorer=body.get("scorer") or config.pipeline.scorer,
            reranker=body.get("reranker") or config.pipeline.reranker,
            seed=config.pipeline.seed,
        )
        if pcfg.reranker is Reranker.LLM and state.client is None:
            return JSONResponse({"error": "LLM reranker is not configured"}, status_code=503)
        try:
            pred = await run_in_threadpool(
                predict_retrieve_rank, body["query"], state.index, state.table, pcfg, state.client
            )
        except RerankFailed as exc:
            return JSONResponse(
                {"error": str(exc), "candidates": [c.to_dict() for c in exc.candidates]},
                status_code=502,
            )
        return pred.to_dict()

    return app


def _check_bind(host: str, port: int) -> None:
    try:
        with socket.create_server((host, port)):
            pass
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc


def serve(config: ServiceConfig) -> None:
    """Run until SIGINT/SIGTERM; in-flight requests get 10 s to drain."""
    config.check_paths()
    _check_bind(config.host, config.port)
    server: Optional[uvicorn.Server] = None
    failure: list[BaseException] = []

    def abort(exc: BaseException):
        failure.append(exc)
        if server is not None:
            server.should_exit = True

    app = create_app(config, on_load_failure=abort)
    server = uvicorn.Server(uvicorn.Config(
        app, host=config.host, port=config.port, timeout_graceful_shutdown=10, log_level="info",
    ))
    server.run()
    if failure:
        raise failure[0]


"""Late-interaction (MaxSim) scoring and token embedding providers."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyTokenList
from .tokens import Token

DEFAULT_DIM = 64
DEFAULT_SEED = 42


@dataclass(frozen=True, eq=False)
class TokenEmbedding:
    token: Token
    vector: np.ndarray


class EmbeddingProvider(Protocol):
    dim: int

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        """Return a ``(len(texts), dim)`` array of unit-norm rows."""


class HashingEmbeddingProvider:
    """Deterministic pseudo-random unit vector per token text.

    The generator seed is the first 8 bytes (little endian) of
    BLAKE2b(``"<seed>\\x00<token>"``); the vector is ``dim`` standard normal
    draws from numpy's PCG64 ``default_rng(generator_seed)``, scaled to unit
    length. Identical text therefore maps to the identical vector in any process.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        if dim < 1:
            raise ValueError("embedding dimension must be positive")
        self.dim = dim
        self.seed = seed
        self._vector = lru_cache(maxsize=200_000)(self._make_vector)

    def _make_vector(self, text: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{text}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        v.setflags(write=False)
        return v

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.vstack([self._vector(t) for t in texts])


def embed_tokens(tokens: Sequence[Token], provider: EmbeddingProvider) -> list[TokenEmbedding]:
    vectors = provider.embed_texts([t.text for t in tokens])
    return [TokenEmbedding(t, v) for t, v in zip(tokens, vectors)]


def _as_matrix(embs) -> np.ndarray:
    if isinstance(embs, np.ndarray):
        return np.atleast_2d(embs)
    return np.vstack([e.vector if isinstance(e, TokenEmbedding) else np.asarray(e, dtype=float) for e in embs])


def maxsim_score(query_emb, doc_emb) -> float:
    """Sum over query tokens of the best dot product against any document token.

    Accepts lists of :class:`TokenEmbedding`, lists of vectors, or 2-D arrays.
    """
    if len(query_emb) == 0 or len(doc_emb) == 0:
        raise EmptyTokenList("MaxSim needs at least one query and one document token")
    q = _as_matrix(query_emb)
    d = _as_matrix(doc_emb)
    if q.shape[1] != d.shape[1]:
        raise DimensionMismatch(f"query dimension {q.shape[1]} != document dimension {d.shape[1]}")
    return float(np.sum(np.max(q @ d.T, axis=1)))

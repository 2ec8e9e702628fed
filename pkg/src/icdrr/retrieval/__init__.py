from .index import (
    DEFAULT_K,
    Candidate,
    InvertedIndex,
    Scorer,
    bm25_score,
    build_index,
    retrieve_topk,
)
from .maxsim import HashingEmbeddingProvider, TokenEmbedding, embed_tokens, maxsim_score
from .storage import load_index, save_index
from .tokens import Token, tokenize

__all__ = [
    "DEFAULT_K",
    "Candidate",
    "HashingEmbeddingProvider",
    "InvertedIndex",
    "Scorer",
    "Token",
    "TokenEmbedding",
    "bm25_score",
    "build_index",
    "embed_tokens",
    "load_index",
    "maxsim_score",
    "retrieve_topk",
    "save_index",
    "tokenize",
]

"""Inverted index over long descriptions, BM25 and MaxSim top-k retrieval."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from ..corpus import CodeTable, IcdCode
from ..errors import EmptyCorpus, EmptyQuery, UnknownDoc
from .maxsim import DEFAULT_DIM, DEFAULT_SEED, EmbeddingProvider, HashingEmbeddingProvider
from .tokens import Token, token_texts, tokenize

K1 = 1.2
B = 0.75
DEFAULT_K = 15


class Scorer(str, enum.Enum):
    BM25 = "bm25"
    MAXSIM = "maxsim"


@dataclass(frozen=True)
class Candidate:
    code: IcdCode
    score: float
    rank: int
    scorer: Scorer

    def to_dict(self) -> dict:
        return {"code": self.code.normalized, "score": self.score, "rank": self.rank, "scorer": self.scorer.value}


def bm25_idf(doc_count: int, doc_freq: int) -> float:
    return math.log(1.0 + (doc_count - doc_freq + 0.5) / (doc_freq + 0.5))


class InvertedIndex:
    """Immutable term -> postings index in CSR layout.

    Postings for the term with id ``t`` occupy
    ``posting_docs[posting_offsets[t]:posting_offsets[t + 1]]`` (ascending doc id)
    with matching ``posting_tfs``. Doc ids are positions in ``codes``.
    """

    def __init__(
        self,
        codes: Sequence[str],
        doc_lengths,
        vocabulary: Sequence[str],
        posting_offsets,
        posting_docs,
        posting_tfs,
        dim: int = DEFAULT_DIM,
        seed: int = DEFAULT_SEED,
        source_digest: str = "",
    ):
        self.codes = tuple(codes)
        self.doc_lengths = np.asarray(doc_lengths, dtype=np.int64)
        self.vocabulary = tuple(vocabulary)
        self.posting_offsets = np.asarray(posting_offsets, dtype=np.int64)
        self.posting_docs = np.asarray(posting_docs, dtype=np.int64)
        self.posting_tfs = np.asarray(posting_tfs, dtype=np.int64)
        self.dim = dim
        self.seed = seed
        self.source_digest = source_digest

        if not self.codes:
            raise EmptyCorpus("index needs at least one document")
        if len(self.doc_lengths) != len(self.codes):
            raise ValueError("doc_lengths and codes differ in length")
        if len(self.posting_offsets) != len(self.vocabulary) + 1:
            raise ValueError("posting_offsets must have len(vocabulary) + 1 entries")

        self.doc_count = len(self.codes)
        self.avg_doc_length = float(self.doc_lengths.sum()) / self.doc_count
        self.term_ids = {t: i for i, t in enumerate(self.vocabulary)}
        self.doc_ids = {c: i for i, c in enumerate(self.codes)}
        # lexicographic position of each doc's code, for tie-breaking
        self.code_rank = np.empty(self.doc_count, dtype=np.int64)
        self.code_rank[np.argsort(np.array(self.codes, dtype=object), kind="stable")] = np.arange(self.doc_count)

        doc_freq = np.diff(self.posting_offsets)
        self.idf = np.array([bm25_idf(self.doc_count, int(n)) for n in doc_freq], dtype=np.float64)
        term_of_posting = np.repeat(np.arange(len(self.vocabulary)), doc_freq)
        tf = self.posting_tfs.astype(np.float64)
        if self.avg_doc_length > 0:
            rel_len = self.doc_lengths[self.posting_docs] / self.avg_doc_length
        else:
            rel_len = np.zeros(len(tf))
        norm = K1 * (1.0 - B + B * rel_len)
        # BM25 contribution of each (term, doc) posting for one query occurrence
        self.impacts = self.idf[term_of_posting] * (tf * (K1 + 1.0)) / (tf + norm)

        self._doc_terms: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._vocab_vectors: Optional[np.ndarray] = None
        self._provider: Optional[EmbeddingProvider] = None

    def __len__(self) -> int:
        return self.doc_count

    def __repr__(self) -> str:
        return f"InvertedIndex({self.doc_count} docs, {len(self.vocabulary)} terms)"

    def posting_list(self, term: str) -> list[tuple[int, int]]:
        t = self.term_ids.get(term)
        if t is None:
            return []
        lo, hi = self.posting_offsets[t], self.posting_offsets[t + 1]
        return list(zip(self.posting_docs[lo:hi].tolist(), self.posting_tfs[lo:hi].tolist()))

    @property
    def postings(self) -> Mapping[str, list[tuple[int, int]]]:
        return {term: self.posting_list(term) for term in self.vocabulary}

    # BM25

    def bm25_scores(self, query: Iterable) -> np.ndarray:
        """BM25 score of every document; each query token occurrence counts once."""
        scores = np.zeros(self.doc_count, dtype=np.float64)
        for text in _texts(query):
            t = self.term_ids.get(text)
            if t is None:
                continue
            lo, hi = self.posting_offsets[t], self.posting_offsets[t + 1]
            scores[self.posting_docs[lo:hi]] += self.impacts[lo:hi]
        return scores

    # MaxSim

    @property
    def provider(self) -> EmbeddingProvider:
        if self._provider is None:
            self._provider = HashingEmbeddingProvider(self.dim, self.seed)
        return self._provider

    def doc_terms(self, doc_id: int) -> np.ndarray:
        offsets, terms = self._doc_term_csr()
        return terms[offsets[doc_id]:offsets[doc_id + 1]]

    def _doc_term_csr(self) -> tuple[np.ndarray, np.ndarray]:
        if self._doc_terms is None:
            doc_freq = np.diff(self.posting_offsets)
            term_of_posting = np.repeat(np.arange(len(self.vocabulary)), doc_freq)
            order = np.argsort(self.posting_docs, kind="stable")
            counts = np.bincount(self.posting_docs, minlength=self.doc_count)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._doc_terms = (offsets, term_of_posting[order])
        return self._doc_terms

    def vocab_vectors(self) -> np.ndarray:
        if self._vocab_vectors is None:
            self._vocab_vectors = self.provider.embed_texts(self.vocabulary)
        return self._vocab_vectors

    def maxsim_scores(self, query: Iterable) -> np.ndarray:
        """MaxSim score of every document; documents without tokens score 0."""
        texts = _texts(query)
        scores = np.zeros(self.doc_count, dtype=np.float64)
        if not texts:
            return scores
        offsets, terms = self._doc_term_csr()
        nonempty = np.flatnonzero(np.diff(offsets) > 0)
        if len(nonempty) == 0:
            return scores
        q = self.provider.embed_texts(texts)
        sims = q @ self.vocab_vectors().T
        starts = offsets[nonempty]
        best = np.zeros((len(texts), len(nonempty)))
        for i in range(len(texts)):
            best[i] = np.maximum.reduceat(sims[i, terms], starts)
        scores[nonempty] = best.sum(axis=0)
        return scores


def _texts(query) -> list[str]:
    if isinstance(query, str):
        return token_texts(query)
    return [q.text if isinstance(q, Token) else str(q) for q in query]


def build_index(
    table: CodeTable,
    dim: int = DEFAULT_DIM,
    seed: int = DEFAULT_SEED,
) -> InvertedIndex:
    """One document per entry; document text is the long description."""
    if len(table) == 0:
        raise EmptyCorpus("cannot index an empty table")
    codes = []
    lengths = []
    per_term: dict[str, list[tuple[int, int]]] = {}
    for doc_id, entry in enumerate(table):
        toks = token_texts(entry.long_description)
        codes.append(entry.code.normalized)
        lengths.append(len(toks))
        for term, tf in Counter(toks).items():
            per_term.setdefault(term, []).append((doc_id, tf))
    vocabulary = sorted(per_term)
    offsets = [0]
    docs: list[int] = []
    tfs: list[int] = []
    for term in vocabulary:
        plist = per_term[term]
        docs.extend(d for d, _ in plist)
        tfs.extend(f for _, f in plist)
        offsets.append(len(docs))
    return InvertedIndex(
        codes, lengths, vocabulary, offsets, docs, tfs,
        dim=dim, seed=seed, source_digest=table.source_digest,
    )


def bm25_score(index: InvertedIndex, query: Sequence, doc_id: int) -> float:
    if not 0 <= doc_id < index.doc_count:
        raise UnknownDoc(doc_id)
    total = 0.0
    for text in _texts(query):
        t = index.term_ids.get(text)
        if t is None:
            continue
        lo, hi = index.posting_offsets[t], index.posting_offsets[t + 1]
        pos = lo + int(np.searchsorted(index.posting_docs[lo:hi], doc_id))
        if pos < hi and index.posting_docs[pos] == doc_id:
            total += float(index.impacts[pos])
    return total


def select_top_k(scores: np.ndarray, code_rank: np.ndarray, k: int) -> np.ndarray:
    """Doc ids of the ``k`` best positive scores, ties by ascending code."""
    hits = np.flatnonzero(scores > 0)
    if len(hits) > k:
        # keep every doc tied with the k-th best score so the tie-break sees them all
        kth = np.partition(scores[hits], len(hits) - k)[len(hits) - k]
        hits = hits[scores[hits] >= kth]
    order = np.lexsort((code_rank[hits], -scores[hits]))
    return hits[order[:k]]


def retrieve_topk(
    index: InvertedIndex,
    query: str,
    k: int = DEFAULT_K,
    scorer: Scorer | str = Scorer.BM25,
) -> list[Candidate]:
    if k < 1:
        raise ValueError("k must be at least 1")
    scorer = Scorer(scorer)
    tokens = tokenize(query)
    if not tokens:
        raise EmptyQuery("query has no tokens")
    if scorer is Scorer.BM25:
        scores = index.bm25_scores(tokens)
    else:
        scores = index.maxsim_scores(tokens)
    top = select_top_k(scores, index.code_rank, k)
    return [
        Candidate(IcdCode(index.codes[d], index.codes[d]), float(scores[d]), rank, scorer)
        for rank, d in enumerate(top.tolist(), start=1)
    ]

"""Independent reference implementations used only by tests.

These deliberately share nothing with the engine beyond the formula: raw
token lists in, plain Python loops, no index structures.
"""

import math
import re


def words(text):
    return re.findall(r"[^\W_]+", text.lower())


def brute_bm25(docs_tokens, query_tokens, doc_id, k1=1.2, b=0.75):
    n_docs = len(docs_tokens)
    avgdl = sum(len(d) for d in docs_tokens) / n_docs
    doc = docs_tokens[doc_id]
    total = 0.0
    for term in query_tokens:
        n_t = sum(1 for d in docs_tokens if term in d)
        if n_t == 0:
            continue
        tf = doc.count(term)
        if tf == 0:
            continue
        idf = math.log(1 + (n_docs - n_t + 0.5) / (n_t + 0.5))
        rel = len(doc) / avgdl if avgdl else 0.0
        total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * rel))
    return total


def brute_maxsim(q_vectors, d_vectors):
    total = 0.0
    for q in q_vectors:
        best = -math.inf
        for d in d_vectors:
            dot = 0.0
            for a, c in zip(q, d):
                dot += a * c
            best = max(best, dot)
        total += best
    return total


def brute_topk(scores, codes, k):
    ranked = sorted((i for i, s in enumerate(scores) if s > 0), key=lambda i: (-scores[i], codes[i]))
    return [codes[i] for i in ranked[:k]]

"""Brute-force embedding search and retrieval metrics.

Recall@k is min-normalized: a query with ``r`` relevant functions scores
``hits / min(r, k)`` so queries with many relevant functions can still reach
1.0 at small ``k``.  AP is the standard per-query average precision
(normalized by the number of relevant functions) and MAP its mean over
queries.  Both are computed with exact rational arithmetic and rounded once,
so results do not depend on query order or batching.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import partial

import numpy as np

from .dataset import iter_jsonl
from .embeddings import EmbeddingMatrix
from .errors import KExceedsPool, MalformedRecord, MissingResult, PoolTooSmall, ShapeMismatch
from .parallel import chunked, parallel_map

POOL_SIZE = 10000
DEFAULT_KS = (1, 5, 10, 20)


@dataclass(frozen=True)
class QueryRecord:
    id: str
    text: str
    relevant_ids: frozenset

    def __post_init__(self):
        object.__setattr__(self, "relevant_ids", frozenset(str(r) for r in self.relevant_ids))
        if not self.relevant_ids:
            raise ValueError(f"query {self.id!r} has no relevant ids")

    @classmethod
    def from_dict(cls, d):
        return cls(str(d["id"]), d.get("text", ""), frozenset(d["relevant_ids"]))

    def to_dict(self):
        return {"id": self.id, "text": self.text, "relevant_ids": sorted(self.relevant_ids)}


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked_ids: tuple
    scores: tuple


@dataclass(frozen=True)
class EvalReport:
    recall_at: dict
    map: float
    n_queries: int
    pool_size: int

    def to_dict(self):
        return {
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "map": self.map,
            "n_queries": self.n_queries,
            "pool_size": self.pool_size,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def read_queries(lines):
    out = []
    for line_no, obj in iter_jsonl(lines):
        try:
            out.append(QueryRecord.from_dict(obj))
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(line_no, f"{type(e).__name__}: {e}") from None
    return out


def _unit_rows(x):
    norms = np.sqrt((x * x).sum(axis=-1, keepdims=True))
    return x / np.where(norms == 0, 1.0, norms)


class _Index:
    """Pool matrix plus the precomputed id order used for tie-breaking."""

    def __init__(self, pool: EmbeddingMatrix, cosine=False):
        self.ids = pool.ids
        self.values = _unit_rows(pool.values) if cosine else pool.values
        self.cosine = cosine
        order = sorted(range(len(self.ids)), key=self.ids.__getitem__)
        self.id_rank = np.empty(len(self.ids), dtype=np.int64)
        self.id_rank[order] = np.arange(len(self.ids))

    def rank(self, query_id, vec, k=None):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.values.shape[1],):
            raise ShapeMismatch(f"query has shape {vec.shape}, pool dimension is {self.values.shape[1]}")
        if self.cosine:
            vec = _unit_rows(vec)
        # row-wise products summed along d: a row's score never depends on its position
        scores = (self.values * vec).sum(axis=1)
        order = np.lexsort((self.id_rank, -scores))
        if k is not None:
            order = order[:k]
        return RetrievalResult(query_id, tuple(self.ids[i] for i in order), tuple(scores[order].tolist()))


def search_topk(query_vec, pool: EmbeddingMatrix, k, query_id="", cosine=False) -> RetrievalResult:
    """Top-``k`` pool rows by dot product; ties go to the smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > pool.n:
        raise KExceedsPool(f"k={k} but the pool has {pool.n} rows")
    return _Index(pool, cosine).rank(query_id, query_vec, k)


def _judged(results, judgments):
    by_id = {r.query_id: r for r in results}
    for q in judgments:
        r = by_id.get(q.id)
        if r is None:
            raise MissingResult(f"no result for query {q.id!r}")
        yield q, r


def recall_at_k(results, judgments, k) -> float:
    """Mean over queries of ``|relevant & top_k| / min(|relevant|, k)``."""
    judgments = list(judgments)
    if not judgments:
        return 0.0
    total = Fraction(0)
    for q, r in _judged(results, judgments):
        hits = len(q.relevant_ids.intersection(r.ranked_ids[:k]))
        total += Fraction(hits, min(len(q.relevant_ids), k))
    return float(total / len(judgments))


def average_precision(ranked_ids, relevant_ids) -> Fraction:
    """Exact AP: mean over relevant items of precision at their rank.

    Relevant items missing from the ranking contribute zero.
    """
    ap = Fraction(0)
    hits = 0
    for rank, id_ in enumerate(ranked_ids, start=1):
        if id_ in relevant_ids:
            hits += 1
            ap += Fraction(hits, rank)
    return ap / len(relevant_ids)


def mean_ap(results, judgments) -> float:
    judgments = list(judgments)
    if not judgments:
        return 0.0
    total = sum((average_precision(r.ranked_ids, q.relevant_ids) for q, r in _judged(results, judgments)),
                Fraction(0))
    return float(total / len(judgments))


def build_pool(corpus_ids, judgments, pool_size=POOL_SIZE, seed=0):
    """All relevant ids plus seeded uniform distractors, in corpus order."""
    corpus = list(corpus_ids)
    in_corpus = set(corpus)
    relevant = set()
    for q in judgments:
        relevant |= q.relevant_ids
    missing = relevant - in_corpus
    if missing:
        raise PoolTooSmall(f"{len(missing)} relevant ids are not in the corpus, e.g. {sorted(missing)[0]!r}")
    if pool_size > len(corpus):
        raise PoolTooSmall(f"pool of {pool_size} requested from a corpus of {len(corpus)}")
    if len(relevant) > pool_size:
        raise PoolTooSmall(f"{len(relevant)} relevant ids do not fit in a pool of {pool_size}")
    others = [c for c in corpus if c not in relevant]
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(others), size=pool_size - len(relevant), replace=False)
    keep = relevant | {others[i] for i in picked.tolist()}
    return [c for c in corpus if c in keep]


def _rank_chunk(index, k, chunk):
    return [index.rank(qid, vec, k) for qid, vec in chunk]


def rank_queries(judgments, query_emb: EmbeddingMatrix, pool: EmbeddingMatrix, k=None, cosine=False, workers=1):
    """Rank the pool for every judged query (full ranking when ``k`` is None)."""
    if query_emb.d != pool.d:
        raise ShapeMismatch(f"query dimension {query_emb.d} != pool dimension {pool.d}")
    pos = {qid: i for i, qid in enumerate(query_emb.ids)}
    work = []
    for q in judgments:
        if q.id not in pos:
            raise MissingResult(f"no query embedding for {q.id!r}")
        work.append((q.id, query_emb.values[pos[q.id]]))
    index = _Index(pool, cosine)
    chunks = chunked(work, workers)
    out = parallel_map(partial(_rank_chunk, index, k), chunks, workers, threads=True)
    return [r for chunk in out for r in chunk]


def evaluate(judgments, query_emb, pool_emb, pool_size=POOL_SIZE, ks=DEFAULT_KS, seed=0,
             cosine=False, workers=1) -> EvalReport:
    """Sample a pool, rank it for every query, and report recall@k and MAP."""
    judgments = list(judgments)
    pool_ids = build_pool(pool_emb.ids, judgments, pool_size, seed)
    pool = pool_emb if list(pool_emb.ids) == pool_ids else pool_emb.take(pool_ids)
    for k in ks:
        if k > pool.n:
            raise KExceedsPool(f"k={k} but the pool has {pool.n} rows")
    results = rank_queries(judgments, query_emb, pool, None, cosine, workers)
    recall = {k: recall_at_k(results, judgments, k) for k in ks}
    return EvalReport(recall, mean_ap(results, judgments), len(judgments), pool.n)

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asmsearch.embeddings import EmbeddingMatrix
from asmsearch.errors import KExceedsPool, MissingResult, PoolTooSmall, ShapeMismatch
from asmsearch.retrieval import (EvalReport, QueryRecord, RetrievalResult, average_precision, build_pool,
                                 evaluate, mean_ap, rank_queries, read_queries, recall_at_k, search_topk)
from oracles import ap_oracle, brute_rank, recall_oracle


def result(qid, ranked):
    return RetrievalResult(qid, tuple(ranked), tuple(float(-i) for i in range(len(ranked))))


def q(qid, rel):
    return QueryRecord(qid, "", frozenset(rel))


def test_min_normalization():
    assert recall_at_k([result("q", ["a", "x", "y"])], [q("q", {"a", "b", "c"})], 1) == 1.0


def test_min_normalization_not_monotone_below_relevant_count():
    # with k below the relevant count the denominator grows with k
    res, jd = [result("q", ["a", "x", "b"])], [q("q", {"a", "b", "c"})]
    assert [recall_at_k(res, jd, k) for k in (1, 2, 3)] == [1.0, 0.5, 2 / 3]


def test_relevant_just_outside_cutoff():
    ranked = [f"d{i}" for i in range(20)] + ["rel"]
    assert recall_at_k([result("q", ranked)], [q("q", {"rel"})], 20) == 0.0


def test_ap_hand_value():
    assert average_precision(["a", "x", "b", "y", "z"], {"a", "b"}) == Fraction(5, 6)
    assert mean_ap([result("q", ["a", "b"])], [q("q", {"a"})]) == 1.0


def test_missing_result():
    with pytest.raises(MissingResult):
        recall_at_k([result("q1", ["a"])], [q("q2", {"a"})], 1)
    with pytest.raises(MissingResult):
        mean_ap([], [q("q2", {"a"})])


def test_query_record_requires_relevant():
    with pytest.raises(ValueError):
        q("q", set())


def test_metric_oracles_200_instances():
    rng = random.Random(99)
    for _ in range(200):
        pool = [f"f{i:02d}" for i in range(rng.randint(1, 50))]
        judgments, results, rankings = [], [], {}
        for j in range(rng.randint(1, 20)):
            rel = set(rng.sample(pool, rng.randint(1, min(5, len(pool)))))
            ranking = pool[:]
            rng.shuffle(ranking)
            judgments.append(q(f"q{j}", rel))
            results.append(result(f"q{j}", ranking))
            rankings[f"q{j}"] = ranking
        jd = {x.id: set(x.relevant_ids) for x in judgments}
        for k in (1, 5, 10, 20):
            assert recall_at_k(results, judgments, k) == float(recall_oracle(rankings, jd, k))
        expected_map = sum((ap_oracle(rankings[x], jd[x]) for x in jd), Fraction(0)) / len(jd)
        assert mean_ap(results, judgments) == float(expected_map)


def test_search_single_and_orthonormal():
    pool = EmbeddingMatrix(("only",), np.array([[1.0, 2.0]]))
    assert search_topk(np.array([0.0, 1.0]), pool, 1).ranked_ids == ("only",)
    ids = tuple(f"id{i}" for i in range(10))
    eye = EmbeddingMatrix(ids, np.eye(10))
    assert search_topk(np.eye(10)[7], eye, 3).ranked_ids[0] == "id7"


def test_search_errors():
    pool = EmbeddingMatrix(("a", "b"), np.eye(2))
    with pytest.raises(KExceedsPool):
        search_topk(np.ones(2), pool, 3)
    with pytest.raises(ShapeMismatch):
        search_topk(np.ones(3), pool, 1)


def test_search_matches_full_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        vals = rng.integers(-3, 4, size=(100, 8)).astype(float)  # integer entries force exact ties
        ids = tuple(f"p{i:03d}" for i in rng.permutation(100))
        pool = EmbeddingMatrix(ids, vals)
        qv = rng.integers(-3, 4, size=8).astype(float)
        res = search_topk(qv, pool, 10)
        assert list(res.ranked_ids) == brute_rank(qv, ids, vals)[:10]
        assert all(x >= y for x, y in zip(res.scores, res.scores[1:]))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 40), st.integers(1, 6))
def test_search_invariant_under_row_order(seed, n, d):
    rng = np.random.default_rng(seed)
    vals = rng.integers(-2, 3, size=(n, d)).astype(float)
    ids = tuple(f"x{i}" for i in range(n))
    perm = rng.permutation(n)
    qv = rng.integers(-2, 3, size=d).astype(float)
    a = search_topk(qv, EmbeddingMatrix(ids, vals), n)
    b = search_topk(qv, EmbeddingMatrix(tuple(ids[i] for i in perm), vals[perm]), n)
    assert a.ranked_ids == b.ranked_ids


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_recall_monotone_and_map_prefix(seed):
    rng = random.Random(seed)
    pool = [f"f{i}" for i in range(rng.randint(2, 30))]
    rel = set(rng.sample(pool, rng.randint(1, len(pool))))
    ranking = pool[:]
    rng.shuffle(ranking)
    res, jd = [result("q", ranking)], [q("q", rel)]
    vals = [recall_at_k(res, jd, k) for k in range(len(rel), len(pool) + 1)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))
    assert all(0.0 <= v <= 1.0 for v in vals)
    prefix = all(x in rel for x in ranking[:len(rel)])
    assert (mean_ap(res, jd) == 1.0) == prefix


def test_build_pool():
    corpus = [f"c{i:05d}" for i in range(12000)]
    rng = random.Random(1)
    relevant = rng.sample(corpus, 300)
    judgments = [q(f"q{i}", relevant[i * 3:(i + 1) * 3]) for i in range(100)]
    pool = build_pool(corpus, judgments, 10000, seed=5)
    assert len(pool) == len(set(pool)) == 10000
    assert set(relevant) <= set(pool)
    assert pool == build_pool(corpus, judgments, 10000, seed=5)
    assert pool != build_pool(corpus, judgments, 10000, seed=6)
    assert build_pool(corpus[:10], [q("q", ["c00001"])], 10) == corpus[:10]


def test_build_pool_errors():
    with pytest.raises(PoolTooSmall):
        build_pool(["a", "b"], [q("q", ["a"])], 3)
    with pytest.raises(PoolTooSmall):
        build_pool(["a", "b", "c"], [q("q", ["a", "b"])], 1)
    with pytest.raises(PoolTooSmall):
        build_pool(["a", "b"], [q("q", ["zzz"])], 2)


def test_evaluate_and_workers_agree():
    rng = np.random.default_rng(3)
    ids = tuple(f"f{i:04d}" for i in range(500))
    pool = EmbeddingMatrix(ids, rng.standard_normal((500, 16)))
    judgments = [q(f"q{i}", [ids[i], ids[i + 100]]) for i in range(30)]
    qemb = EmbeddingMatrix(tuple(x.id for x in judgments),
                           pool.values[:30] + 0.3 * rng.standard_normal((30, 16)))
    reports = [evaluate(judgments, qemb, pool, 200, (1, 5, 10, 20), seed=9, workers=w) for w in (1, 4, 16)]
    assert reports[0] == reports[1] == reports[2]
    r = reports[0]
    assert isinstance(r, EvalReport) and r.n_queries == 30 and r.pool_size == 200
    assert r.recall_at[1] > 0.5
    assert all(0 <= v <= 1 for v in r.recall_at.values())


def test_rank_queries_missing_embedding():
    pool = EmbeddingMatrix(("a", "b"), np.eye(2))
    qemb = EmbeddingMatrix(("q1",), np.ones((1, 2)))
    with pytest.raises(MissingResult):
        rank_queries([q("q2", ["a"])], qemb, pool)


def test_read_queries_round_trip():
    recs = [q("q1", ["b", "a"]), q("q2", ["c"])]
    import json
    lines = [json.dumps(r.to_dict()) + "\n" for r in recs]
    assert read_queries(lines) == recs

import itertools
import math
import random
from collections import Counter
from fractions import Fraction
from functools import lru_cache

import pytest
from hypothesis import given, settings, strategies as st

from asmsearch.errors import EmptyInput
from asmsearch.seqmetrics import (MetricScore, align, bleu, corpus_scores, count_chunks, lcs_length, mean_scores,
                                  meteor, rouge_l, score_pair)


def bleu_oracle(c, r, max_n=4):
    """Exact rational precisions; the geometric mean is taken in floating point at the end."""
    precisions = []
    for n in range(1, max_n + 1):
        cg = Counter(tuple(c[i:i + n]) for i in range(len(c) - n + 1))
        rg = Counter(tuple(r[i:i + n]) for i in range(len(r) - n + 1))
        total = sum(cg.values())
        hit = sum(min(v, rg[g]) for g, v in cg.items())
        if n == 1 and hit == 0:
            return 0.0
        if total == 0:
            precisions.append(Fraction(1, 1))
        elif hit == 0:
            precisions.append(Fraction(1, total + 1))
        else:
            precisions.append(Fraction(hit, total))
    log_mean = sum(math.log(p) for p in precisions) / max_n
    bp = min(0.0, 1 - len(r) / len(c))
    return math.exp(bp + log_mean)


def lcs_oracle(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


# goldens: fixed by hand before the implementation was run
BLEU_MOV = (1 / 24) ** 0.25      # p = 3/4, 1/3, smoothed 1/3, smoothed 1/2; no brevity penalty
ROUGE_ACD = 6 / 7                # LCS 3, P 1, R 3/4
METEOR_ID4 = 0.9921875           # 1 - 0.5 * (1/4)^3


def test_bleu_golden():
    c = ["mov", "rax", ",", "5"]
    r = ["mov", "rbx", ",", "5"]
    assert bleu_oracle(c, r) == pytest.approx(BLEU_MOV, rel=1e-15)
    assert bleu(c, r).value == pytest.approx(BLEU_MOV, rel=1e-15)


def test_bleu_identity():
    t = "push rbp mov rbp , rsp pop rbp ret".split()
    assert bleu(t, t).value == 1.0


def test_bleu_zero_overlap_below_floor():
    c = [f"a{i}" for i in range(10)]
    r = [f"b{i}" for i in range(10)]
    v = bleu(c, r).value
    assert v < 0.1


def test_bleu_brevity_penalty():
    r = "a b c d e f g h".split()
    c = r[:4]
    assert bleu(c, r).value == pytest.approx(math.exp(1 - 8 / 4), rel=1e-12)


def test_rouge_golden():
    assert rouge_l(list("acd"), list("abcd")).value == pytest.approx(ROUGE_ACD, rel=1e-15)
    assert rouge_l(list("abc"), list("abc")).value == 1.0
    assert rouge_l(list("abc"), list("xyz")).value == 0.0


def test_meteor_goldens():
    t = ["mov", "rax", ",", "5"]
    assert meteor(t, t).value == METEOR_ID4
    assert meteor(["a"], ["b"]).value == 0.0
    rev = list("abcde")
    m = meteor(rev[::-1], rev).value
    assert m == pytest.approx(0.5, rel=1e-15)  # Fmean = 1, penalty 0.5


@pytest.mark.parametrize("f", [bleu, rouge_l, meteor])
def test_empty_input(f):
    with pytest.raises(EmptyInput):
        f([], ["a"])
    with pytest.raises(EmptyInput):
        f(["a"], [])


def test_metric_score_bounds():
    with pytest.raises(ValueError):
        MetricScore("bleu", 1.5)
    with pytest.raises(ValueError):
        MetricScore("cider", 0.5)


def test_lcs_exhaustive_small_alphabet():
    seqs = [s for n in range(0, 7) for s in itertools.product("abc", repeat=n)]
    rng = random.Random(3)
    for a in seqs[::7]:
        for b in rng.sample(seqs, 20):
            assert lcs_length(a, b) == lcs_oracle(a, b)


_tok = st.lists(st.sampled_from(list("abc")), min_size=1, max_size=12)


@settings(max_examples=400, deadline=None)
@given(_tok, _tok)
def test_lcs_matches_memoized_oracle(a, b):
    assert lcs_length(a, b) == lcs_oracle(tuple(a), tuple(b))


@settings(max_examples=300, deadline=None)
@given(_tok, _tok)
def test_bleu_matches_oracle(a, b):
    assert bleu(a, b).value == pytest.approx(bleu_oracle(a, b), rel=1e-12)


@settings(max_examples=300, deadline=None)
@given(_tok, _tok, st.permutations(list("abc")))
def test_renaming_invariance(a, b, perm):
    ren = dict(zip("abc", perm))
    a2 = [ren[x] for x in a]
    b2 = [ren[x] for x in b]
    for f in (bleu, rouge_l, meteor):
        assert f(a, b).value == f(a2, b2).value


@settings(max_examples=300, deadline=None)
@given(_tok, _tok)
def test_bounds_and_identity(a, b):
    for f in (bleu, rouge_l, meteor):
        v = f(a, b).value
        assert 0.0 <= v <= 1.0
    assert rouge_l(a, a).value == 1.0
    if len(a) >= 4:
        assert bleu(a, a).value == 1.0
        assert meteor(a, a).value > 0.99
    if a != b:
        assert rouge_l(a, b).value < 1.0


def _min_chunks_oracle(c, r):
    """Brute force over all maximum-size one-to-one exact alignments."""
    best = None

    def rec(i, used, pairs):
        nonlocal best
        if i == len(c):
            key = (-len(pairs), count_chunks(sorted(pairs)))
            if best is None or key < best:
                best = key
            return
        rec(i + 1, used, pairs)
        for j, tok in enumerate(r):
            if tok == c[i] and j not in used:
                rec(i + 1, used | {j}, pairs + [(i, j)])

    rec(0, frozenset(), [])
    return -best[0], best[1]


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(list("abcd")), min_size=1, max_size=6),
       st.lists(st.sampled_from(list("abcd")), min_size=1, max_size=6))
def test_alignment_is_maximal(c, r):
    pairs = align(c, r)
    m, _ = _min_chunks_oracle(c, r)
    assert len(pairs) == m


@settings(max_examples=200, deadline=None)
@given(st.permutations(list("abcdefgh")))
def test_meteor_on_permutations(perm):
    # distinct tokens make the alignment unique, so chunks can be counted directly
    ref = list("abcdefgh")
    pos = [ref.index(t) for t in perm]
    chunks = 1 + sum(1 for x, y in zip(pos, pos[1:]) if y != x + 1)
    expected = 1.0 * (1 - 0.5 * (chunks / 8) ** 3)
    assert meteor(list(perm), ref).value == pytest.approx(expected, rel=1e-15)


def test_corpus_mean():
    pairs = [(list("abc"), list("abc")), (list("acd"), list("abcd"))]
    m = corpus_scores(pairs)
    assert m == mean_scores([score_pair(c, r) for c, r in pairs])
    assert m["n_pairs"] == 2
    assert m["rouge_l"] == pytest.approx((1 + 6 / 7) / 2, rel=1e-15)

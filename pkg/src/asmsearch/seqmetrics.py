"""Sentence-level BLEU, ROUGE-L and METEOR over assembly token streams.

All three take a candidate and a reference token list and return a
:class:`MetricScore` in ``[0, 1]``.  Corpus figures are plain arithmetic
means of the per-function scores (:func:`corpus_scores`).
"""
from __future__ import annotations

import math
from fractions import Fraction
from collections import Counter
from dataclasses import dataclass

from .errors import EmptyInput

METRICS = ("bleu", "rouge_l", "meteor")


@dataclass(frozen=True)
class MetricScore:
    name: str
    value: float

    def __post_init__(self):
        if self.name not in METRICS:
            raise ValueError(f"unknown metric {self.name!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.name} value {self.value} outside [0, 1]")

    def __float__(self):
        return self.value


def _check(candidate, reference):
    if not candidate or not reference:
        raise EmptyInput("candidate and reference must both be non-empty")


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precisions(candidate, reference, max_n=4):
    """``(clipped matches, candidate n-gram total)`` for n = 1..max_n."""
    out = []
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        matches = sum(min(c, ref[g]) for g, c in cand.items())
        out.append((matches, max(len(candidate) - n + 1, 0)))
    return out


def bleu(candidate, reference, max_n=4):
    """Smoothed sentence BLEU with uniform weights and brevity penalty.

    Orders n >= 2 whose clipped match count is zero use add-one smoothing,
    ``1 / (total + 1)``.  Unigram precision is never smoothed: a candidate
    sharing no token with the reference scores 0.  The precision product is
    kept exact and rounded once before the root is taken.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    _check(candidate, reference)
    product = Fraction(1)
    for n, (m, total) in enumerate(modified_precisions(candidate, reference, max_n), start=1):
        if m == 0:
            if n == 1:
                return MetricScore("bleu", 0.0)
            m, total = 1, total + 1
        product *= Fraction(m, total)
    value = float(product) ** (1.0 / max_n)
    if len(candidate) < len(reference):
        value *= math.exp(1.0 - len(reference) / len(candidate))
    return MetricScore("bleu", min(1.0, value))


def lcs_length(a, b):
    """Longest common subsequence length, O(len(a) * len(b)) time, O(len(b)) space."""
    if len(b) > len(a):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    _check(candidate, reference)
    lcs = lcs_length(candidate, reference)
    # 2PR / (P + R) with P = lcs/|c| and R = lcs/|r| simplifies to one ratio
    return MetricScore("rouge_l", 2 * lcs / (len(candidate) + len(reference)))


def align(candidate, reference):
    """Exact-match unigram alignment as a list of ``(cand_pos, ref_pos)``.

    Candidate tokens are visited left to right.  Each takes the reference
    position right after the previous match when that continues the current
    chunk, otherwise the leftmost unused occurrence of the same token.  The
    number of pairs is always the maximum possible match count.
    """
    positions = {}
    for j, tok in enumerate(reference):
        positions.setdefault(tok, []).append(j)
    used = set()
    pairs = []
    prev = None  # (cand_pos, ref_pos) of the last match
    for i, tok in enumerate(candidate):
        slots = positions.get(tok)
        if not slots:
            continue
        choice = None
        if prev is not None and prev[0] == i - 1:
            nxt = prev[1] + 1
            if nxt < len(reference) and reference[nxt] == tok and nxt not in used:
                choice = nxt
        if choice is None:
            choice = next((j for j in slots if j not in used), None)
        if choice is None:
            continue
        used.add(choice)
        prev = (i, choice)
        pairs.append(prev)
    return pairs


def count_chunks(pairs):
    chunks = 0
    last = None
    for i, j in pairs:
        if last is None or i != last[0] + 1 or j != last[1] + 1:
            chunks += 1
        last = (i, j)
    return chunks


def meteor(candidate, reference, alpha=0.9, beta=3.0, gamma=0.5):
    """Exact-match METEOR: ``Fmean * (1 - gamma * (chunks / m) ** beta)``.

    ``Fmean = P R / (alpha P + (1 - alpha) R)``, which is ``10PR / (R + 9P)``
    at the default ``alpha``.  Parameters are read as the decimals they
    print as and an integral ``beta`` keeps the whole score rational, so it
    is rounded only once.
    """
    _check(candidate, reference)
    pairs = align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return MetricScore("meteor", 0.0)
    a, g = Fraction(repr(float(alpha))), Fraction(repr(float(gamma)))
    # P R / (a P + (1 - a) R) with P = m/|c|, R = m/|r|
    fmean = m / (a * len(reference) + (1 - a) * len(candidate))
    frag = Fraction(count_chunks(pairs), m)
    if float(beta).is_integer():
        return MetricScore("meteor", float(fmean * (1 - g * frag ** int(beta))))
    return MetricScore("meteor", float(fmean) * (1 - float(g) * float(frag) ** beta))


def score_pair(candidate, reference, max_n=4):
    return {
        "bleu": bleu(candidate, reference, max_n).value,
        "rouge_l": rouge_l(candidate, reference).value,
        "meteor": meteor(candidate, reference).value,
    }


def corpus_scores(pairs, max_n=4):
    """Mean of each metric over ``(candidate, reference)`` pairs.

    Returns ``{"bleu", "rouge_l", "meteor", "n_pairs"}``; sums use
    ``math.fsum`` so the result does not depend on how pairs were batched.
    """
    per = [score_pair(c, r, max_n) for c, r in pairs]
    return mean_scores(per)


def mean_scores(per_pair):
    n = len(per_pair)
    out = {}
    for name in METRICS:
        out[name] = math.fsum(s[name] for s in per_pair) / n if n else 0.0
    out["n_pairs"] = n
    return out

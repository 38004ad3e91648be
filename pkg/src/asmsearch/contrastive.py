"""In-batch InfoNCE loss for paired text/assembly embeddings, with gradients.

For a batch of ``n`` pairs with text rows ``t_i`` and assembly rows ``a_i``
and logits ``z_ij = t_i . a_j / T``::

    L1 = -(1/n) sum_i log softmax_j(z_ij)[i]      text -> assembly
    L2 = -(1/n) sum_i log softmax_j(z_ji)[i]      assembly -> text
    L  = L1 + L2

Similarities are raw dot products unless ``normalize=True``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .embeddings import as_matrix
from .errors import NonPositiveTemperature, ShapeMismatch

TEMPERATURE = 0.07


@dataclass(frozen=True)
class LossReport:
    l1: float
    l2: float
    total: float
    temperature: float

    def to_dict(self):
        return {"l1": self.l1, "l2": self.l2, "total": self.total, "temperature": self.temperature}


def _check(texts, asms, temperature):
    t, a = as_matrix(texts), as_matrix(asms)
    if t.shape != a.shape:
        raise ShapeMismatch(f"texts {t.shape} vs asms {a.shape}")
    if t.shape[0] < 1 or t.shape[1] < 1:
        raise ShapeMismatch("empty batch")
    if not (temperature > 0 and math.isfinite(temperature)):
        raise NonPositiveTemperature(f"temperature must be positive, got {temperature}")
    return t, a


def _normalize(x):
    norms = np.sqrt((x * x).sum(axis=1))
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero embedding")
    return x / norms[:, None], norms


def similarities(t, a):
    """``S[i, j] = t_i . a_j``, bitwise equal to ``similarities(a, t).T``."""
    return (t[:, None, :] * a[None, :, :]).sum(axis=2)


def _row_softmax_terms(z):
    """Per-row ``logsumexp(z_i) - z_ii`` and the row softmax.

    The row maximum is split off before summing so a dominant logit costs
    no precision: the loss is ``(max - z_ii) + log1p(rest)``.  Row sums use
    ``math.fsum`` and are therefore independent of column order.
    """
    n = z.shape[0]
    rows = np.arange(n)
    k = z.argmax(axis=1)
    m = z[rows, k]
    e = np.exp(z - m[:, None])
    e[rows, k] = 0.0
    rest = np.array([math.fsum(r) for r in e])
    losses = (m - z[rows, rows]) + np.log1p(rest)
    e[rows, k] = 1.0
    probs = e / (1.0 + rest)[:, None]
    return losses, probs


def _forward(t, a, temperature):
    z = similarities(t, a) / temperature
    loss1, p = _row_softmax_terms(z)
    loss2, q = _row_softmax_terms(np.ascontiguousarray(z.T))
    n = z.shape[0]
    l1 = math.fsum(loss1) / n
    l2 = math.fsum(loss2) / n
    return l1, l2, p, q


def infonce_loss(texts, asms, temperature=TEMPERATURE, normalize=False) -> LossReport:
    t, a = _check(texts, asms, temperature)
    if normalize:
        t, _ = _normalize(t)
        a, _ = _normalize(a)
    l1, l2, _, _ = _forward(t, a, temperature)
    return LossReport(l1, l2, l1 + l2, temperature)


def infonce_grad(texts, asms, temperature=TEMPERATURE, normalize=False, terms=("l1", "l2")):
    """Analytic gradients of ``L1 + L2`` with respect to both matrices.

    Returns ``(grad_texts, grad_asms)``, each shaped like its input.  With
    ``p`` the row softmax of ``z`` and ``q`` that of ``z.T``::

        dL/dt = ((p - I) + (q - I).T) @ a / (n T)
        dL/da = ((p - I).T + (q - I)) @ t / (n T)

    ``terms`` selects which of the two losses to differentiate.
    """
    unknown = set(terms) - {"l1", "l2"}
    if unknown:
        raise ValueError(f"unknown loss terms {sorted(unknown)}")
    t, a = _check(texts, asms, temperature)
    if normalize:
        t_raw, a_raw = t, a
        t, t_norm = _normalize(t_raw)
        a, a_norm = _normalize(a_raw)
    n = t.shape[0]
    _, _, p, q = _forward(t, a, temperature)
    eye = np.eye(n)
    g = np.zeros((n, n))
    if "l1" in terms:
        g += p - eye
    if "l2" in terms:
        g += (q - eye).T
    scale = 1.0 / (n * temperature)
    grad_t = scale * (g @ a)
    grad_a = scale * (g.T @ t)
    if normalize:
        # d(x/|x|) = (I - u u^T) / |x|
        grad_t = (grad_t - t * (grad_t * t).sum(axis=1, keepdims=True)) / t_norm[:, None]
        grad_a = (grad_a - a * (grad_a * a).sum(axis=1, keepdims=True)) / a_norm[:, None]
    return grad_t, grad_a

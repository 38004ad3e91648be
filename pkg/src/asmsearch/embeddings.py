"""Embedding matrices and the ``AEMB`` binary file format.

Layout (all integers little-endian)::

    b"AEMB" | version: u8 = 1 | n: u32 | d: u32 | n*d float32, row-major | ids

where ``ids`` is the n row identifiers as UTF-8, separated by newlines.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .asm import lex
from .errors import ShapeMismatch

MAGIC = b"AEMB"
VERSION = 1
_HEADER = struct.Struct("<4sBII")


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeMismatch(f"expected a non-empty n x d matrix, got shape {values.shape}")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != values.shape[0]:
            raise ShapeMismatch(f"{len(ids)} ids for {values.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ValueError("row ids must be unique")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def row(self, id_):
        return self.values[self.ids.index(id_)]

    def take(self, ids):
        """Sub-matrix with rows in the order of ``ids``."""
        pos = {k: i for i, k in enumerate(self.ids)}
        return EmbeddingMatrix(tuple(ids), self.values[[pos[k] for k in ids]])

    def __eq__(self, other):
        return (isinstance(other, EmbeddingMatrix) and self.ids == other.ids
                and np.array_equal(self.values, other.values))


def as_matrix(x):
    if isinstance(x, EmbeddingMatrix):
        return x.values
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def dumps_aemb(m: EmbeddingMatrix) -> bytes:
    for i in m.ids:
        if "\n" in i:
            raise ValueError(f"id {i!r} contains a newline")
    body = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    return _HEADER.pack(MAGIC, VERSION, m.n, m.d) + body + "\n".join(m.ids).encode("utf-8")


def loads_aemb(data: bytes) -> EmbeddingMatrix:
    if len(data) < _HEADER.size:
        raise ValueError("truncated AEMB header")
    magic, version, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported AEMB version {version}")
    end = _HEADER.size + 4 * n * d
    if len(data) < end:
        raise ValueError("truncated AEMB payload")
    values = np.frombuffer(data, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    text = data[end:].decode("utf-8")
    if text.endswith("\n"):
        text = text[:-1]
    ids = text.split("\n") if n else []
    return EmbeddingMatrix(tuple(ids), values.astype(np.float64))


def write_aemb(path, m):
    with open(path, "wb") as fh:
        fh.write(dumps_aemb(m))


def read_aemb(path):
    with open(path, "rb") as fh:
        return loads_aemb(fh.read())


@lru_cache(maxsize=1 << 16)
def _bucket(token, dim):
    h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % dim


def bag_of_tokens(texts, dim=256):
    """Hashed bag-of-token-count vectors, one row per text.

    A deliberately trivial embedder: lowercase lexer tokens hashed into
    ``dim`` buckets.  Useful for exercising retrieval plumbing only.
    """
    out = np.zeros((len(texts), dim), dtype=np.float64)
    for r, text in enumerate(texts):
        for tok in lex(text.lower()):
            out[r, _bucket(tok, dim)] += 1.0
    return out

"""Source/assembly pair corpora: records, filters, cleaning and sampling.

Corpus files are JSON-lines, one :class:`PairRecord` per line.  Every stage
here is a generator over records so corpora stream through in constant
memory, except :func:`sample_mix`, which has to buffer its two length buckets.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Iterator, Optional

import numpy as np

from .asm import AssemblyFunction, count_tokens, parse_assembly
from .errors import MalformedRecord, UnterminatedComment

LANGUAGES = ("c", "cpp", "go", "java", "javascript", "php", "python", "ruby", "other")
COMPILERS = ("gcc-7", "gcc-9", "gcc-11", "clang-9", "clang-11", "clang-12")
OPT_LEVELS = ("O0", "O1", "O2", "O3", "Os")

SHORT_MAX_TOKENS = 2048
LONG_MAX_TOKENS = 4096


def count_body_lines(body):
    return sum(1 for line in body.split("\n") if line.strip())


@dataclass(frozen=True)
class SourceFunction:
    name: str
    language: str
    body: str
    docstring: Optional[str] = None
    body_line_count: int = field(default=-1)

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language tag {self.language!r}")
        n = count_body_lines(self.body)
        if self.body_line_count == -1:
            object.__setattr__(self, "body_line_count", n)
        elif self.body_line_count != n:
            raise ValueError(f"body_line_count={self.body_line_count} but body has {n} non-empty lines")


@dataclass(frozen=True)
class CompilationProfile:
    compiler: str
    opt_level: str
    stripped: bool = False

    def __post_init__(self):
        if self.compiler not in COMPILERS:
            raise ValueError(f"unknown compiler {self.compiler!r}")
        if self.opt_level not in OPT_LEVELS:
            raise ValueError(f"unknown optimization level {self.opt_level!r}")


@dataclass(frozen=True)
class PairRecord:
    """One source function with its (real or virtual) compiled assembly.

    The assembly is kept as text and parsed on first access.  When
    ``demangled_name`` is known it becomes the parsed function's name.
    """

    id: str
    source: SourceFunction
    assembly_text: str
    profile: CompilationProfile
    inline_flag: bool = False
    demangled_name: Optional[str] = None

    @cached_property
    def assembly(self) -> AssemblyFunction:
        return parse_assembly(self.assembly_text, name=self.demangled_name)

    @property
    def token_count(self):
        return self.assembly.token_count + count_tokens(self.source.body)

    def to_dict(self):
        d = {
            "id": self.id,
            "source": {
                "name": self.source.name,
                "language": self.source.language,
                "body": self.source.body,
                "docstring": self.source.docstring,
                "body_line_count": self.source.body_line_count,
            },
            "assembly_text": self.assembly_text,
            "profile": {
                "compiler": self.profile.compiler,
                "opt_level": self.profile.opt_level,
                "stripped": self.profile.stripped,
            },
            "inline_flag": self.inline_flag,
        }
        if self.demangled_name is not None:
            d["demangled_name"] = self.demangled_name
        return d

    @classmethod
    def from_dict(cls, d):
        s = d["source"]
        p = d["profile"]
        return cls(
            id=str(d["id"]),
            source=SourceFunction(s["name"], s["language"], s["body"], s.get("docstring"),
                                  s.get("body_line_count", -1)),
            assembly_text=d["assembly_text"],
            profile=CompilationProfile(p["compiler"], p["opt_level"], bool(p.get("stripped", False))),
            inline_flag=bool(d.get("inline_flag", False)),
            demangled_name=d.get("demangled_name"),
        )


def dumps_record(rec):
    return json.dumps(rec.to_dict(), ensure_ascii=False)


def iter_jsonl(lines):
    """Yield ``(line_no, obj)`` for each non-blank JSON line."""
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield line_no, json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRecord(line_no, f"invalid JSON: {e.msg}") from None


def read_corpus(lines) -> Iterator[PairRecord]:
    """Stream records from an iterable of JSON lines (e.g. an open file)."""
    for _, rec in iter_records(lines):
        yield rec


def iter_records(lines):
    """Like :func:`read_corpus` but yields ``(line_no, record)``."""
    seen = set()
    for line_no, obj in iter_jsonl(lines):
        try:
            rec = PairRecord.from_dict(obj)
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord(line_no, f"{type(e).__name__}: {e}") from None
        if rec.id in seen:
            raise MalformedRecord(line_no, f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        yield line_no, rec


def write_corpus(records, fh):
    n = 0
    for rec in records:
        fh.write(dumps_record(rec) + "\n")
        n += 1
    return n


# -- filtering ---------------------------------------------------------------

@dataclass
class FilterReport:
    input: int = 0
    output: int = 0
    dropped_inline: int = 0
    dropped_short: int = 0

    def merge(self, other):
        return FilterReport(self.input + other.input, self.output + other.output,
                            self.dropped_inline + other.dropped_inline,
                            self.dropped_short + other.dropped_short)

    __add__ = merge

    def to_dict(self):
        return {"input": self.input, "output": self.output,
                "dropped_inline": self.dropped_inline, "dropped_short": self.dropped_short}


_LOCAL_LABEL_RE = re.compile(r"^(\.L|\.LBB|LBB|loc_|locret_|def_|jpt_|\$LN|\.Ltmp)")


def looks_inlined(f: AssemblyFunction):
    """Heuristic: more than one function-like (non-local) symbol in the body.

    Not used unless asked for; ingestion metadata is the primary source.
    """
    symbols = {s for s in f.labels if not _LOCAL_LABEL_RE.match(s)}
    return len(symbols) > 1


def drop_reason(rec, min_body_lines=5, infer_inline=False):
    if rec.inline_flag or (infer_inline and looks_inlined(rec.assembly)):
        return "inline"
    if rec.source.body_line_count < min_body_lines:
        return "short"
    return None


def filter_pairs(records: Iterable[PairRecord], min_body_lines=5, report=None, infer_inline=False):
    """Drop inline-flagged and short records, counting reasons in ``report``.

    A record that is both inline and short counts as inline.  ``report`` is
    updated as the generator is consumed.
    """
    if report is None:
        report = FilterReport()
    for rec in records:
        report.input += 1
        reason = drop_reason(rec, min_body_lines, infer_inline)
        if reason == "inline":
            report.dropped_inline += 1
        elif reason == "short":
            report.dropped_short += 1
        else:
            report.output += 1
            yield rec


# -- comment stripping ------------------------------------------------------

_COMMENT_STYLES = {
    # language: (line comment markers, block comment (open, close) or None)
    "c": (("//",), ("/*", "*/")),
    "cpp": (("//",), ("/*", "*/")),
    "java": (("//",), ("/*", "*/")),
    "javascript": (("//",), ("/*", "*/")),
    "go": (("//",), ("/*", "*/")),
    "php": (("//", "#"), ("/*", "*/")),
    "python": (("#",), None),
    "ruby": (("#",), None),
}
_QUOTES = {
    "c": ('"', "'"), "cpp": ('"', "'"), "java": ('"', "'"),
    "javascript": ('"', "'", "`"), "go": ('"', "'", "`"), "php": ('"', "'"),
    "python": ('"""', "'''", '"', "'"), "ruby": ('"', "'"),
}
_RAW_QUOTES = {"`"}


def strip_comments(body, language):
    """Remove comments from ``body`` while leaving string literals alone.

    Block comments are not nested (the first closing marker ends them).  A
    block comment becomes a single space when it separates two non-blank
    characters, otherwise nothing; newlines inside it are kept so line
    structure survives.  Lines left blank by comment removal are dropped and
    lines that lost a trailing comment are right-stripped.
    """
    if language not in _COMMENT_STYLES:
        return body
    line_markers, block = _COMMENT_STYLES[language]
    quotes = _QUOTES[language]
    out = []
    touched = set()  # output line numbers that lost a comment
    line = 0
    i, n = 0, len(body)
    while i < n:
        c = body[i]
        q = next((q for q in quotes if body.startswith(q, i)), None)
        if q is not None:
            j = i + len(q)
            while j < n and not body.startswith(q, j):
                if body[j] == "\\" and q not in _RAW_QUOTES:
                    j += 1
                elif body[j] == "\n" and len(q) == 1 and q not in _RAW_QUOTES:
                    break  # unterminated one-line literal: stop at end of line
                j += 1
            j = min(n, j + len(q)) if body.startswith(q, j) else j
            chunk = body[i:j]
            out.append(chunk)
            line += chunk.count("\n")
            i = j
            continue
        if block and body.startswith(block[0], i):
            j = body.find(block[1], i + len(block[0]))
            if j < 0:
                raise UnterminatedComment(f"block comment opened at offset {i} never closes")
            inner = body[i:j + len(block[1])]
            newlines = inner.count("\n")
            before = out[-1][-1:] if out and out[-1] else ""
            after = body[j + len(block[1]):j + len(block[1]) + 1]
            if newlines:
                out.append("\n" * newlines)
            elif before.strip() and after.strip():
                out.append(" ")
            touched.update(range(line, line + newlines + 1))
            line += newlines
            i = j + len(block[1])
            continue
        if any(body.startswith(m, i) for m in line_markers):
            j = body.find("\n", i)
            j = n if j < 0 else j
            touched.add(line)
            i = j
            continue
        out.append(c)
        if c == "\n":
            line += 1
        i += 1
    lines = "".join(out).split("\n")
    kept = []
    for k, text in enumerate(lines):
        if k in touched:
            if not text.strip():
                continue
            text = text.rstrip()
        kept.append(text)
    return "\n".join(kept)


def strip_source_comments(s: SourceFunction) -> SourceFunction:
    body = strip_comments(s.body, s.language)
    return replace(s, body=body, body_line_count=count_body_lines(body))


# -- docstrings ---------------------------------------------------------------

# '*' runs with surrounding whitespace, including the "/*" and "*/" delimiters
_BORDER_RE = re.compile(r"^\s*(?:/?\*+\s*)+|(?:\s*\*+/?)+\s*$|^\s+|\s+$")


def clean_docstring(text, min_words=4):
    """Strip ``*`` borders, keep the first paragraph, drop short results.

    Paragraph lines are joined with single spaces.

    >>> clean_docstring("* Sorts the array in place. *\\n\\n* @param a array")
    'Sorts the array in place.'
    >>> clean_docstring("ok") is None
    True
    """
    lines = [_BORDER_RE.sub("", line) for line in text.splitlines()]
    para = []
    for line in lines:
        if line:
            para.append(line)
        elif para:
            break
    cleaned = " ".join(para)
    if len(cleaned.split()) < min_words:
        return None
    return cleaned


# -- profiles and sampling ----------------------------------------------------

def _digest64(seed, key):
    h = hashlib.blake2b(digest_size=8)
    h.update((seed & ((1 << 64) - 1)).to_bytes(8, "little"))
    h.update(key.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def assign_profile(rng_seed, record_id) -> CompilationProfile:
    """Pick a compiler/optimization/stripped combination for a record.

    Deterministic in ``(rng_seed, record_id)``; uniform over the 30-cell
    compiler x level grid and over ``stripped``.
    """
    h = _digest64(rng_seed, record_id)
    cell = h % 30
    stripped = bool((h >> 40) & 1)
    return CompilationProfile(COMPILERS[cell // 5], OPT_LEVELS[cell % 5], stripped)


def sample_mix(records, rng_seed, ratio=(3, 1), short_max=SHORT_MAX_TOKENS, long_max=LONG_MAX_TOKENS,
               token_count=None):
    """Interleave short and long records at a fixed ratio.

    Records above ``long_max`` tokens are dropped.  Output is emitted in blocks
    of ``ratio[0]`` short records and ``ratio[1]`` long ones, each bucket in
    input order; the seed only decides where the long records sit inside each
    block.  Once either bucket cannot fill another block the remainder of the
    other is dropped.  If one bucket is empty from the start the other passes
    through unchanged.
    """
    if token_count is None:
        token_count = lambda r: r.token_count  # noqa: E731
    short, long_ = [], []
    for rec in records:
        t = token_count(rec)
        if t <= short_max:
            short.append(rec)
        elif t <= long_max:
            long_.append(rec)
    if not long_:
        yield from short
        return
    if not short:
        yield from long_
        return
    ns, nl = ratio
    blocks = min(len(short) // ns, len(long_) // nl)
    rng = np.random.default_rng(rng_seed)
    width = ns + nl
    for b in range(blocks):
        slots = np.zeros(width, dtype=bool)
        slots[rng.choice(width, size=nl, replace=False)] = True
        si, li = b * ns, b * nl
        for is_long in slots:
            if is_long:
                yield long_[li]
                li += 1
            else:
                yield short[si]
                si += 1

"""Intel-syntax x86-64 assembly: parsing, rendering and tokenization.

The parser accepts disassembler-style listings (IDA or ``objdump -M intel``
flavoured), one instruction per line, with ``label:`` lines and ``;``
comments.  Operands become small immutable objects; anything the operand
grammar does not understand is kept verbatim as a :class:`RawOperand` so that
sequence metrics still see it.

>>> f = parse_assembly("f:\\n  mov rax, 5\\n  ret")
>>> f.labels, len(f.instructions)
({'f': 0}, 2)
>>> tokenize(f)
['mov', 'rax', ',', '5', 'ret']
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .errors import EmptyFunction, MalformedLine

# name -> (gpr index, width in bits, high-byte register)
REGISTERS: dict[str, tuple[int, int, bool]] = {}

_GPR64 = ["rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi"]
_GPR32 = ["eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi"]
_GPR16 = ["ax", "cx", "dx", "bx", "sp", "bp", "si", "di"]
_GPR8 = ["al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil"]
for _i in range(8):
    REGISTERS[_GPR64[_i]] = (_i, 64, False)
    REGISTERS[_GPR32[_i]] = (_i, 32, False)
    REGISTERS[_GPR16[_i]] = (_i, 16, False)
    REGISTERS[_GPR8[_i]] = (_i, 8, False)
for _i, _name in enumerate(["ah", "ch", "dh", "bh"]):
    REGISTERS[_name] = (_i, 8, True)
for _i in range(8, 16):
    REGISTERS[f"r{_i}"] = (_i, 64, False)
    REGISTERS[f"r{_i}d"] = (_i, 32, False)
    REGISTERS[f"r{_i}w"] = (_i, 16, False)
    REGISTERS[f"r{_i}b"] = (_i, 8, False)

GPR_NAMES = _GPR64 + [f"r{i}" for i in range(8, 16)]

SIZE_KEYWORDS = {"byte": 1, "word": 2, "dword": 4, "qword": 8}
SIZE_NAMES = {v: k for k, v in SIZE_KEYWORDS.items()}
_WIDE_SIZE_KEYWORDS = {"xmmword", "ymmword", "zmmword", "tbyte", "oword", "fword", "real4", "real8"}
SEGMENTS = {"cs", "ds", "es", "fs", "gs", "ss"}
PREFIXES = {"rep", "repe", "repz", "repne", "repnz", "lock", "bnd", "notrack"}
_SKIP_KEYWORDS = {"public", "extrn", "extern", "assume", "align", "global",
                  "db", "dw", "dd", "dq", "include"}

# Allowed operand counts, checked only for mnemonics the emulator knows.
ARITY: dict[str, frozenset[int]] = {}
for _m in ("mov", "movzx", "movsx", "movsxd", "lea", "add", "sub", "and", "or",
           "xor", "cmp", "test"):
    ARITY[_m] = frozenset({2})
for _m in ("mul", "div", "idiv", "inc", "dec", "neg", "not", "push", "pop",
           "jmp", "call"):
    ARITY[_m] = frozenset({1})
for _m in ("shl", "sal", "shr", "sar"):
    ARITY[_m] = frozenset({1, 2})
ARITY["imul"] = frozenset({1, 2, 3})
ARITY["ret"] = frozenset({0, 1})
ARITY["nop"] = frozenset({0, 1})
for _m in ("cdq", "cqo", "cdqe"):
    ARITY[_m] = frozenset({0})

JCC = {
    "je", "jz", "jne", "jnz", "jl", "jnge", "jle", "jng", "jg", "jnle", "jge",
    "jnl", "jb", "jc", "jnae", "jbe", "jna", "ja", "jnbe", "jae", "jnb", "jnc",
    "js", "jns",
}
for _m in JCC:
    ARITY[_m] = frozenset({1})

_IDENT = r"[A-Za-z_.$@?][\w.$@?]*"
_IDENT_RE = re.compile(rf"^{_IDENT}$")
_LABEL_RE = re.compile(rf"^({_IDENT})\s*:(?!:)(.*)$")
_MNEMONIC_RE = re.compile(r"^[a-z][a-z0-9_.]*$")
_NUMBER_RE = re.compile(r"^(0x[0-9a-f]+|[0-9][0-9a-f]*h|[0-9]+)$", re.IGNORECASE)
_SIZE_RE = re.compile(r"^([a-z0-9]+)\s+(?:ptr\s+)?(.*)$", re.IGNORECASE | re.DOTALL)
_MEM_RE = re.compile(r"^(?:([a-z]{2})\s*:\s*)?([^\[\]]*)\[([^\[\]]*)\]$", re.IGNORECASE)
_SEG_SYM_RE = re.compile(rf"^([a-z]{{2}})\s*:\s*({_IDENT}|[0-9][0-9a-fx]*h?)$", re.IGNORECASE)
_SCALED_RE = re.compile(r"^(\w+)\s*\*\s*(\w+)$")

TOKEN_RE = re.compile(
    r'"(?:[^"\\]|\\.)*"|\'(?:[^\'\\]|\\.)*\'|[A-Za-z_.$@?][\w.$@?]*|\d\w*|\S'
)

_M64 = (1 << 64) - 1


@dataclass(frozen=True)
class Register:
    name: str
    width: int


@dataclass(frozen=True)
class Immediate:
    value: int


@dataclass(frozen=True)
class Memory:
    """``[base + index*scale + symbol + displacement]`` with an optional size.

    ``segment`` and ``symbol`` carry disassembler decorations such as
    ``ds:`` or IDA stack-variable names; both are None for plain operands.
    """

    base: Optional[str] = None
    index: Optional[str] = None
    scale: Optional[int] = None
    displacement: int = 0
    size_hint: Optional[int] = None
    segment: Optional[str] = None
    symbol: Optional[str] = None

    def __post_init__(self):
        if (self.index is None) != (self.scale is None):
            raise ValueError("scale must be given exactly when index is")
        if self.scale is not None and self.scale not in (1, 2, 4, 8):
            raise ValueError(f"bad scale {self.scale}")


@dataclass(frozen=True)
class LabelRef:
    symbol: str


@dataclass(frozen=True)
class RawOperand:
    text: str


Operand = Union[Register, Immediate, Memory, LabelRef, RawOperand]


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    operands: tuple = ()
    raw_text: str = field(default="", compare=False)

    def __str__(self):
        return render_instruction(self)


@dataclass(frozen=True)
class AssemblyFunction:
    name: str
    instructions: tuple
    labels: dict = field(default_factory=dict)
    token_count: int = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        n = len(self.instructions)
        for sym, idx in self.labels.items():
            if not 0 <= idx < n:
                raise ValueError(f"label {sym!r} points past the last instruction")
        object.__setattr__(self, "token_count", sum(len(instruction_tokens(i)) for i in self.instructions))

    def render(self):
        return render(self)


class _BadOperand(Exception):
    """Internal signal: operand is syntactically broken (becomes MalformedLine)."""


def parse_int(text):
    """Parse ``123``, ``-5``, ``0x1f`` or IDA-style ``1Fh``; None if not a number."""
    t = text.strip()
    neg = t.startswith("-")
    if neg or t.startswith("+"):
        t = t[1:].strip()
    if not _NUMBER_RE.match(t):
        return None
    low = t.lower()
    if low.startswith("0x"):
        v = int(low, 16)
    elif low.endswith("h"):
        v = int(low[:-1], 16)
    else:
        v = int(low, 10)
    return -v if neg else v


def _to_signed64(v):
    if v < -(1 << 63) or v > _M64:
        raise _BadOperand(f"immediate {v} does not fit in 64 bits")
    v &= _M64
    return v - (1 << 64) if v >> 63 else v


def _strip_comment(line, line_no):
    quote = None
    i = 0
    while i < len(line):
        c = line[i]
        if quote:
            if c == "\\":
                i += 1
            elif c == quote:
                quote = None
        elif c in "\"'":
            quote = c
        elif c == ";":
            return line[:i]
        i += 1
    if quote:
        raise MalformedLine(line_no, line, "unterminated string literal")
    return line


def _split_operands(text):
    parts, depth, quote, start = [], 0, None, 0
    i = 0
    while i < len(text):
        c = text[i]
        if quote:
            if c == "\\":
                i += 1
            elif c == quote:
                quote = None
        elif c in "\"'":
            quote = c
        elif c == "[":
            depth += 1
        elif c == "]":
            depth -= 1
            if depth < 0:
                raise _BadOperand("unbalanced ']'")
        elif c == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
        i += 1
    if depth:
        raise _BadOperand("unbalanced '['")
    parts.append(text[start:])
    parts = [p.strip() for p in parts]
    if any(not p for p in parts):
        raise _BadOperand("empty operand")
    return parts


def _parse_memory_inner(inner, mem):
    """Fill ``mem`` (a dict) from the text between brackets."""
    text = inner.replace(" ", "").replace("\t", "")
    if not text:
        raise _BadOperand("empty memory operand")
    terms = re.split(r"([+-])", text)
    sign = "+"
    if terms[0] == "":
        terms = terms[1:]
    else:
        terms = ["+"] + terms
    if len(terms) % 2:
        raise _BadOperand("dangling operator in memory operand")
    for k in range(0, len(terms), 2):
        sign, term = terms[k], terms[k + 1].lower()
        if not term:
            raise _BadOperand("empty term in memory operand")
        scaled = _SCALED_RE.match(term)
        if scaled:
            a, b = scaled.groups()
            if a in REGISTERS or a == "rip":
                reg, scale = a, parse_int(b)
            else:
                reg, scale = b, parse_int(a)
            if reg not in REGISTERS or scale is None:
                raise _BadOperand(f"bad scaled term {term!r}")
            if scale not in (1, 2, 4, 8):
                raise _BadOperand(f"scale {scale} not in 1,2,4,8")
            if sign == "-" or mem["index"] is not None:
                raise _BadOperand("second or negated index register")
            mem["index"], mem["scale"] = reg, scale
        elif term in REGISTERS or term == "rip":
            if sign == "-":
                raise _BadOperand("negated register")
            if mem["base"] is None:
                mem["base"] = term
            elif mem["index"] is None:
                mem["index"], mem["scale"] = term, 1
            else:
                raise _BadOperand("too many registers in memory operand")
        else:
            v = parse_int(term)
            if v is not None:
                mem["displacement"] += v if sign == "+" else -v
            elif _IDENT_RE.match(terms[k + 1]) and sign == "+" and mem["symbol"] is None:
                mem["symbol"] = terms[k + 1]
            else:
                raise _Permissive()


class _Permissive(Exception):
    """Operand is well-formed text we simply do not model; keep it raw."""


def parse_operand(text):
    """Parse one operand.  Raises ``_BadOperand`` for text that is broken."""
    t = text.strip()
    if "%" in t or re.match(r"^\$(0x)?[0-9]", t):
        raise _BadOperand("AT&T syntax is not supported")
    if t[0] in "\"'":
        return RawOperand(t)
    size = None
    m = _SIZE_RE.match(t)
    if m:
        word = m.group(1).lower()
        if word in SIZE_KEYWORDS:
            size, t = SIZE_KEYWORDS[word], m.group(2).strip()
        elif word in _WIDE_SIZE_KEYWORDS:
            return RawOperand(text.strip())
        elif word in ("short", "near", "far"):
            t = re.sub(r"^ptr\s+", "", m.group(2).strip(), flags=re.IGNORECASE)
        elif word == "offset":
            sym = m.group(2).strip()
            return LabelRef(sym) if _IDENT_RE.match(sym) else RawOperand(text.strip())
    low = t.lower()

    mm = _MEM_RE.match(t)
    if mm:
        seg, pre, inner = mm.groups()
        if seg is not None and seg.lower() not in SEGMENTS:
            return RawOperand(text.strip())
        mem = {"base": None, "index": None, "scale": None, "displacement": 0, "symbol": None}
        try:
            pre = pre.strip()
            if pre:
                v = parse_int(pre)
                if v is not None:
                    mem["displacement"] += v
                elif _IDENT_RE.match(pre):
                    mem["symbol"] = pre
                else:
                    raise _Permissive()
            _parse_memory_inner(inner, mem)
        except _Permissive:
            return RawOperand(text.strip())
        mem["displacement"] = _to_signed64(mem["displacement"])
        return Memory(size_hint=size, segment=seg.lower() if seg else None, **mem)
    if "[" in t or "]" in t:
        raise _BadOperand("malformed memory operand")

    ms = _SEG_SYM_RE.match(t)
    if ms and ms.group(1).lower() in SEGMENTS:
        seg, rest = ms.group(1).lower(), ms.group(2)
        v = parse_int(rest)
        if v is not None:
            return Memory(displacement=_to_signed64(v), size_hint=size, segment=seg)
        return Memory(symbol=rest, size_hint=size, segment=seg)

    if size is not None:
        # "qword ptr foo": a sized reference to a data symbol
        if _IDENT_RE.match(t) and low not in REGISTERS:
            return Memory(symbol=t, size_hint=size)
        return RawOperand(text.strip())
    if low in REGISTERS:
        return Register(low, REGISTERS[low][1])
    v = parse_int(t)
    if v is not None:
        return Immediate(_to_signed64(v))
    if _IDENT_RE.match(t):
        return LabelRef(t)
    return RawOperand(text.strip())


def parse_instruction(text, line_no=0):
    """Parse a single instruction line (no label, no comment)."""
    body = text.strip()
    parts = body.split(None, 1)
    words = [parts[0].lower()]
    rest = parts[1] if len(parts) > 1 else ""
    while words[-1] in PREFIXES and rest:
        nxt = rest.split(None, 1)
        words.append(nxt[0].lower())
        rest = nxt[1] if len(nxt) > 1 else ""
    for w in words:
        if not _MNEMONIC_RE.match(w):
            raise MalformedLine(line_no, text, f"bad mnemonic {w!r}")
    mnemonic = " ".join(words)
    operands = ()
    rest = rest.strip()
    try:
        if rest:
            operands = tuple(parse_operand(p) for p in _split_operands(rest))
    except _BadOperand as e:
        raise MalformedLine(line_no, text, str(e)) from None
    allowed = ARITY.get(mnemonic)
    if allowed is not None and len(operands) not in allowed:
        raise MalformedLine(line_no, text, f"{mnemonic} takes {sorted(allowed)} operands, got {len(operands)}")
    return Instruction(mnemonic, operands, raw_text=text)


def parse_assembly(text, name=None):
    """Parse a listing into an :class:`AssemblyFunction`.

    Labels map to the index of the next instruction; labels after the last
    instruction are dropped.  Directives (``.text``), ``proc``/``endp`` lines
    and data declarations are skipped.  The function name is ``name`` if
    given, else the ``proc`` name, else the first label before any instruction.
    """
    instructions = []
    labels = {}
    pending = []
    first_label = proc_name = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = _strip_comment(line, line_no).strip()
        while body:
            m = _LABEL_RE.match(body)
            if not m:
                break
            sym = m.group(1)
            if sym in labels or sym in pending:
                raise MalformedLine(line_no, line, f"duplicate label {sym!r}")
            pending.append(sym)
            if first_label is None and not instructions:
                first_label = sym
            body = m.group(2).strip()
        if not body or body.startswith("."):
            continue
        words = body.split()
        if len(words) >= 2 and words[1].lower() in ("proc", "endp"):
            if words[1].lower() == "proc" and proc_name is None:
                proc_name = words[0]
            continue
        if words[0].lower() in _SKIP_KEYWORDS or (len(words) > 1 and words[1].lower() in ("db", "dw", "dd", "dq")):
            continue
        ins = parse_instruction(body, line_no)
        for sym in pending:
            labels[sym] = len(instructions)
        pending = []
        instructions.append(ins)
    if not instructions:
        raise EmptyFunction("no instructions in listing")
    if name is None:
        name = proc_name or first_label or ""
    return AssemblyFunction(name, tuple(instructions), labels)


def render_operand(op):
    if isinstance(op, Register):
        return op.name
    if isinstance(op, Immediate):
        return str(op.value)
    if isinstance(op, LabelRef):
        return op.symbol
    if isinstance(op, RawOperand):
        return op.text
    if isinstance(op, Memory):
        parts = []
        if op.base is not None:
            parts.append(op.base)
        if op.index is not None:
            if op.scale != 1 or op.base is None:
                parts.append(f"{op.index}*{op.scale}")
            else:
                parts.append(op.index)
        if op.symbol is not None:
            parts.append(op.symbol)
        inner = "+".join(parts)
        d = op.displacement
        if d or not inner:
            if not inner:
                inner = str(d)
            else:
                inner += f"+{d}" if d > 0 else f"-{-d}"
        out = f"[{inner}]"
        if op.segment:
            out = f"{op.segment}:{out}"
        if op.size_hint:
            out = f"{SIZE_NAMES[op.size_hint]} ptr {out}"
        return out
    raise TypeError(f"not an operand: {op!r}")


def render_instruction(ins):
    if not ins.operands:
        return ins.mnemonic
    return ins.mnemonic + " " + ", ".join(render_operand(o) for o in ins.operands)


def render(f):
    """Canonical listing text; ``parse_assembly(render(f)) == f``."""
    by_index = {}
    for sym, idx in f.labels.items():
        by_index.setdefault(idx, []).append(sym)
    lines = []
    entry = next((s for s, i in f.labels.items() if i == 0), None)
    if f.name and f.name != entry:
        lines.append(f"{f.name} proc near")
    for i, ins in enumerate(f.instructions):
        for sym in by_index.get(i, ()):
            lines.append(f"{sym}:")
        lines.append("    " + render_instruction(ins))
    return "\n".join(lines) + "\n"


def lex(text):
    """Split operand text into atoms, keeping string literals whole."""
    return TOKEN_RE.findall(text)


def instruction_tokens(ins):
    toks = ins.mnemonic.split()
    for k, op in enumerate(ins.operands):
        if k:
            toks.append(",")
        toks.extend(lex(render_operand(op)))
    return toks


def tokenize(f):
    """Pre-BPE token stream of a function (or of any iterable of instructions)."""
    instructions = f.instructions if isinstance(f, AssemblyFunction) else f
    out = []
    for ins in instructions:
        out.extend(instruction_tokens(ins))
    return out


def count_tokens(text):
    """Token count of free text (source code, docstrings) under the same lexer."""
    return len(lex(text))

"""A small deterministic x86-64 interpreter for runtime-similarity scoring.

Functions run directly from the parsed IR: ``rip`` is an instruction index,
never a byte address.  Registers and memory start from pseudo-random values
derived from a 64-bit seed so two listings executed under the same seed see
exactly the same initial machine.

Pseudo-random function (bit-exact, SplitMix64 finalizer)::

    z = (seed ^ x) + 0x9E3779B97F4A7C15          (mod 2**64)
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9     (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB     (mod 2**64)
    prf(seed, x) = z ^ (z >> 31)

Initial state for a seed ``s``:

* general register number ``i`` (encoding order rax, rcx, rdx, rbx, rsp,
  rbp, rsi, rdi, r8..r15) holds ``prf(s, i)``;
* rsp and rbp both hold ``STACK_BASE + (prf(s, STACK_KEY) & 0xFFFFFFF0)``;
* the byte at address ``A`` reads as ``prf(s, A) & 0xFF`` until written;
* flags ZF, SF, CF, OF are clear.

A call to a symbol outside the function records no memory events, sets
``rax = v = prf(s, call_index)`` and each caller-saved register
``r`` in rcx, rdx, rsi, rdi, r8-r11 to ``prf(v, index_of(r))``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .asm import (
    GPR_NAMES, JCC, REGISTERS, AssemblyFunction, Immediate, LabelRef, Memory,
    Register, parse_assembly,
)

M64 = (1 << 64) - 1
MAX_INSTRUCTIONS = 2000
STACK_BASE = 0x00007FFF00000000
STACK_KEY = 0x535441434B  # "STACK"
DATA_BASE = 0x0000555500000000

HALT_REASONS = ("ret", "instruction_limit", "unsupported_instruction", "fault")
_CALLER_SAVED = (1, 2, 6, 7, 8, 9, 10, 11)  # rcx rdx rsi rdi r8-r11
_REG = {name: i for i, name in enumerate(GPR_NAMES)}
RAX, RCX, RDX, RSP, RBP = _REG["rax"], _REG["rcx"], _REG["rdx"], _REG["rsp"], _REG["rbp"]


def prf(seed, x):
    z = ((seed ^ x) + 0x9E3779B97F4A7C15) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


def symbol_address(name):
    """Seed-independent address for a data symbol (16-byte aligned)."""
    h = hashlib.blake2b(name.encode("utf-8"), digest_size=4).digest()
    return DATA_BASE + (int.from_bytes(h, "little") << 4)


def stack_base(seed):
    return STACK_BASE + (prf(seed, STACK_KEY) & 0xFFFFFFF0)


@dataclass(frozen=True)
class MemoryEvent:
    kind: str  # "read" | "write"
    address: int
    size: int
    value: int


@dataclass(frozen=True)
class ExecutionTrace:
    final_rax: int
    final_rsp: int
    final_rbp: int
    events: tuple
    executed_count: int
    halt_reason: str


@dataclass(frozen=True)
class RuntimeScore:
    rax_equal: bool
    stack_equal: bool
    trace_equal: bool
    value: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value", (self.rax_equal + self.stack_equal + self.trace_equal) / 3)


class _Halt(Exception):
    def __init__(self, reason):
        self.reason = reason


class MachineState:
    """Registers, flags and a lazily initialised sparse byte memory."""

    def __init__(self, seed):
        self.seed = seed & M64
        self.gpr = [prf(self.seed, i) for i in range(16)]
        base = stack_base(self.seed)
        self.gpr[RSP] = base
        self.gpr[RBP] = base
        self.rip = 0
        self.zf = self.sf = self.cf = self.of = False
        self.memory = {}
        self.events = []

    def get(self, name):
        idx, width, high = REGISTERS[name]
        v = self.gpr[idx]
        if high:
            return (v >> 8) & 0xFF
        return v & ((1 << width) - 1)

    def set(self, name, value):
        idx, width, high = REGISTERS[name]
        if width == 64:
            self.gpr[idx] = value & M64
        elif width == 32:
            self.gpr[idx] = value & 0xFFFFFFFF
        elif high:
            self.gpr[idx] = (self.gpr[idx] & ~0xFF00 & M64) | ((value & 0xFF) << 8)
        else:
            mask = (1 << width) - 1
            self.gpr[idx] = (self.gpr[idx] & ~mask & M64) | (value & mask)

    def load(self, address, size):
        v = 0
        mem = self.memory
        for k in range(size):
            a = (address + k) & M64
            b = mem.get(a)
            if b is None:
                b = prf(self.seed, a) & 0xFF
            v |= b << (8 * k)
        self.events.append(MemoryEvent("read", address, size, v))
        return v

    def store(self, address, size, value):
        value &= (1 << (8 * size)) - 1
        for k in range(size):
            self.memory[(address + k) & M64] = (value >> (8 * k)) & 0xFF
        self.events.append(MemoryEvent("write", address, size, value))

    def push(self, value):
        self.gpr[RSP] = (self.gpr[RSP] - 8) & M64
        self.store(self.gpr[RSP], 8, value)

    def pop(self):
        v = self.load(self.gpr[RSP], 8)
        self.gpr[RSP] = (self.gpr[RSP] + 8) & M64
        return v


def _signed(v, bits):
    return v - (1 << bits) if v >> (bits - 1) & 1 else v


def _cond(m, st):
    if m in ("je", "jz"):
        return st.zf
    if m in ("jne", "jnz"):
        return not st.zf
    if m in ("jl", "jnge"):
        return st.sf != st.of
    if m in ("jle", "jng"):
        return st.zf or st.sf != st.of
    if m in ("jg", "jnle"):
        return not st.zf and st.sf == st.of
    if m in ("jge", "jnl"):
        return st.sf == st.of
    if m in ("jb", "jc", "jnae"):
        return st.cf
    if m in ("jbe", "jna"):
        return st.cf or st.zf
    if m in ("ja", "jnbe"):
        return not st.cf and not st.zf
    if m in ("jae", "jnb", "jnc"):
        return not st.cf
    if m == "js":
        return st.sf
    if m == "jns":
        return not st.sf
    raise _Halt("unsupported_instruction")


class _Executor:
    def __init__(self, f: AssemblyFunction, seed, max_instructions):
        self.f = f
        self.st = MachineState(seed)
        self.max_instructions = max_instructions
        self.depth = 0

    # -- operands --------------------------------------------------------

    def size_of(self, *ops, default=8):
        for op in ops:
            if isinstance(op, Register):
                return op.width // 8
        for op in ops:
            if isinstance(op, Memory) and op.size_hint:
                return op.size_hint
        return default

    def ea(self, op: Memory):
        st = self.st
        a = op.displacement
        if op.base is not None and op.base != "rip":
            a += st.get(op.base)
        if op.index is not None:
            if op.index == "rip":
                raise _Halt("unsupported_instruction")
            a += st.get(op.index) * op.scale
        if op.symbol is not None:
            a += symbol_address(op.symbol)
        return a & M64

    def read(self, op, size):
        mask = (1 << (8 * size)) - 1
        if isinstance(op, Register):
            return self.st.get(op.name)
        if isinstance(op, Immediate):
            return op.value & mask
        if isinstance(op, Memory):
            return self.st.load(self.ea(op), size)
        if isinstance(op, LabelRef):
            return symbol_address(op.symbol) & mask
        raise _Halt("unsupported_instruction")

    def write(self, op, size, value):
        if isinstance(op, Register):
            self.st.set(op.name, value)
        elif isinstance(op, Memory):
            self.st.store(self.ea(op), size, value)
        else:
            raise _Halt("unsupported_instruction")

    def rmw(self, op, size):
        """Read a destination, returning the value and a writer bound to the same address."""
        if isinstance(op, Memory):
            addr = self.ea(op)
            v = self.st.load(addr, size)
            return v, lambda r: self.st.store(addr, size, r)
        if isinstance(op, Register):
            return self.st.get(op.name), lambda r: self.st.set(op.name, r)
        raise _Halt("unsupported_instruction")

    # -- flags -----------------------------------------------------------

    def set_zs(self, r, bits):
        self.st.zf = r == 0
        self.st.sf = bool(r >> (bits - 1) & 1)

    def flags_add(self, a, b, r, bits, carry):
        self.set_zs(r, bits)
        self.st.cf = carry
        self.st.of = bool((~(a ^ b) & (a ^ r)) >> (bits - 1) & 1)

    def flags_sub(self, a, b, r, bits):
        self.set_zs(r, bits)
        self.st.cf = a < b
        self.st.of = bool(((a ^ b) & (a ^ r)) >> (bits - 1) & 1)

    def flags_logic(self, r, bits):
        self.set_zs(r, bits)
        self.st.cf = self.st.of = False

    # -- control flow ----------------------------------------------------

    def target(self, op):
        if isinstance(op, LabelRef):
            return self.f.labels.get(op.symbol)
        raise _Halt("unsupported_instruction")

    def stub_call(self):
        st = self.st
        v = prf(st.seed, st.rip)
        st.gpr[RAX] = v
        for r in _CALLER_SAVED:
            st.gpr[r] = prf(v, r)

    # -- main loop -------------------------------------------------------

    def run(self):
        st = self.st
        ins_list = self.f.instructions
        executed = 0
        reason = "fault"
        try:
            while True:
                if executed >= self.max_instructions:
                    reason = "instruction_limit"
                    break
                if not 0 <= st.rip < len(ins_list):
                    reason = "fault"
                    break
                ins = ins_list[st.rip]
                nxt = self.step(ins)
                executed += 1
                if nxt is None:
                    reason = "ret"
                    break
                st.rip = nxt
        except _Halt as h:
            reason = h.reason
        return ExecutionTrace(
            final_rax=st.gpr[RAX], final_rsp=st.gpr[RSP], final_rbp=st.gpr[RBP],
            events=tuple(st.events), executed_count=executed, halt_reason=reason,
        )

    def step(self, ins):
        """Execute one instruction; return the next rip, or None to halt with ``ret``."""
        st = self.st
        m = ins.mnemonic
        ops = ins.operands
        nxt = st.rip + 1

        if m == "nop":
            return nxt
        if m == "mov":
            size = self.size_of(ops[0], ops[1])
            self.write(ops[0], size, self.read(ops[1], size))
            return nxt
        if m in ("movzx", "movsx", "movsxd"):
            if not isinstance(ops[0], Register):
                raise _Halt("unsupported_instruction")
            src_size = self.size_of(ops[1], default=4 if m == "movsxd" else 1)
            v = self.read(ops[1], src_size)
            if m != "movzx":
                v = _signed(v, 8 * src_size)
            self.write(ops[0], ops[0].width // 8, v)
            return nxt
        if m == "lea":
            if not isinstance(ops[0], Register) or not isinstance(ops[1], Memory):
                raise _Halt("unsupported_instruction")
            self.st.set(ops[0].name, self.ea(ops[1]))
            return nxt
        if m in ("add", "sub", "cmp", "and", "or", "xor", "test"):
            size = self.size_of(ops[0], ops[1])
            bits = 8 * size
            mask = (1 << bits) - 1
            if m in ("cmp", "test"):
                a = self.read(ops[0], size)
                writer = None
            else:
                a, writer = self.rmw(ops[0], size)
            b = self.read(ops[1], size)
            if m == "add":
                r = (a + b) & mask
                self.flags_add(a, b, r, bits, a + b > mask)
            elif m in ("sub", "cmp"):
                r = (a - b) & mask
                self.flags_sub(a, b, r, bits)
            elif m in ("and", "test"):
                r = a & b
                self.flags_logic(r, bits)
            elif m == "or":
                r = a | b
                self.flags_logic(r, bits)
            else:
                r = a ^ b
                self.flags_logic(r, bits)
            if writer is not None:
                writer(r)
            return nxt
        if m in ("inc", "dec", "neg", "not"):
            size = self.size_of(ops[0])
            bits = 8 * size
            mask = (1 << bits) - 1
            a, writer = self.rmw(ops[0], size)
            if m == "inc":
                r = (a + 1) & mask
                cf = st.cf
                self.flags_add(a, 1, r, bits, False)
                st.cf = cf
            elif m == "dec":
                r = (a - 1) & mask
                cf = st.cf
                self.flags_sub(a, 1, r, bits)
                st.cf = cf
            elif m == "neg":
                r = (-a) & mask
                self.flags_sub(0, a, r, bits)
                st.cf = a != 0
            else:
                r = ~a & mask
            writer(r)
            return nxt
        if m in ("shl", "sal", "shr", "sar"):
            size = self.size_of(ops[0])
            bits = 8 * size
            mask = (1 << bits) - 1
            count = self.read(ops[1], 1) if len(ops) == 2 else 1
            count &= 0x3F if size == 8 else 0x1F
            a, writer = self.rmw(ops[0], size)
            if count == 0:
                return nxt
            if m in ("shl", "sal"):
                full = a << count
                r = full & mask
                st.cf = bool((full >> bits) & 1)
                st.of = bool(r >> (bits - 1) & 1) != st.cf
            elif m == "shr":
                r = a >> count
                st.cf = bool((a >> (count - 1)) & 1)
                st.of = bool(a >> (bits - 1) & 1)
            else:
                sa = _signed(a, bits)
                r = (sa >> count) & mask
                st.cf = bool((sa >> (count - 1)) & 1)
                st.of = False
            self.set_zs(r, bits)
            writer(r)
            return nxt
        if m in ("imul", "mul"):
            return self.multiply(m, ops, nxt)
        if m in ("div", "idiv"):
            return self.divide(m, ops, nxt)
        if m == "cdq":
            st.set("edx", 0xFFFFFFFF if st.get("eax") >> 31 else 0)
            return nxt
        if m == "cqo":
            st.gpr[RDX] = M64 if st.gpr[RAX] >> 63 else 0
            return nxt
        if m == "cdqe":
            st.gpr[RAX] = _signed(st.get("eax"), 32) & M64
            return nxt
        if m == "push":
            st.push(self.read(ops[0], 8))
            return nxt
        if m == "pop":
            v = st.pop()
            self.write(ops[0], 8, v)
            return nxt
        if m == "jmp":
            t = self.target(ops[0])
            if t is None:
                # tail call out of the function
                self.stub_call()
                return None
            return t
        if m in JCC:
            take = _cond(m, st)
            t = self.target(ops[0])
            if t is None:
                raise _Halt("fault")
            return t if take else nxt
        if m == "call":
            t = self.target(ops[0]) if isinstance(ops[0], LabelRef) else None
            if t is not None:
                st.push(nxt)
                self.depth += 1
                return t
            if isinstance(ops[0], Memory):
                self.read(ops[0], 8)
            elif not isinstance(ops[0], (Register, LabelRef)):
                raise _Halt("unsupported_instruction")
            self.stub_call()
            return nxt
        if m == "ret":
            if self.depth == 0:
                return None
            ret_to = st.pop()
            if ops:
                st.gpr[RSP] = (st.gpr[RSP] + self.read(ops[0], 2)) & M64
            self.depth -= 1
            if ret_to >= len(self.f.instructions):
                raise _Halt("fault")
            return ret_to
        raise _Halt("unsupported_instruction")

    def _acc_names(self, size):
        return {1: ("al", "ah"), 2: ("ax", "dx"), 4: ("eax", "edx"), 8: ("rax", "rdx")}[size]

    def multiply(self, m, ops, nxt):
        st = self.st
        if len(ops) == 1:
            size = self.size_of(ops[0])
            bits = 8 * size
            mask = (1 << bits) - 1
            lo_name, hi_name = self._acc_names(size)
            a = st.get("al") if size == 1 else st.get(lo_name)
            b = self.read(ops[0], size)
            if m == "imul":
                full = _signed(a, bits) * _signed(b, bits)
            else:
                full = a * b
            full &= (1 << (2 * bits)) - 1
            lo, hi = full & mask, full >> bits
            if size == 1:
                st.set("ax", full)
            else:
                st.set(lo_name, lo)
                st.set(hi_name, hi)
            if m == "imul":
                overflow = _signed(full, 2 * bits) != _signed(lo, bits)
            else:
                overflow = hi != 0
        elif m == "imul":
            size = self.size_of(*ops)
            bits = 8 * size
            mask = (1 << bits) - 1
            if len(ops) == 2:
                a, b = self.read(ops[0], size), self.read(ops[1], size)
            else:
                a, b = self.read(ops[1], size), self.read(ops[2], size)
            full = _signed(a, bits) * _signed(b, bits)
            lo = full & mask
            self.write(ops[0], size, lo)
            overflow = full != _signed(lo, bits)
        else:
            raise _Halt("unsupported_instruction")
        st.cf = st.of = overflow
        self.set_zs(lo, bits)
        return nxt

    def divide(self, m, ops, nxt):
        st = self.st
        size = self.size_of(ops[0])
        bits = 8 * size
        mask = (1 << bits) - 1
        divisor = self.read(ops[0], size)
        if size == 1:
            dividend = st.get("ax")
        else:
            lo_name, hi_name = self._acc_names(size)
            dividend = (st.get(hi_name) << bits) | st.get(lo_name)
        if divisor == 0:
            raise _Halt("fault")
        if m == "div":
            q, r = divmod(dividend, divisor)
            if q > mask:
                raise _Halt("fault")
        else:
            a, b = _signed(dividend, 2 * bits), _signed(divisor, bits)
            q = abs(a) // abs(b)
            if (a < 0) != (b < 0):
                q = -q
            r = a - q * b
            if not -(1 << (bits - 1)) <= q < (1 << (bits - 1)):
                raise _Halt("fault")
            q &= mask
            r &= mask
        if size == 1:
            st.set("al", q)
            st.set("ah", r)
        else:
            st.set(lo_name, q)
            st.set(hi_name, r)
        return nxt


def _as_function(f):
    return parse_assembly(f) if isinstance(f, str) else f


def execute(f, seed, max_instructions=MAX_INSTRUCTIONS) -> ExecutionTrace:
    """Run ``f`` from the seeded initial state until it halts.

    Halts on ``ret`` at call depth zero, on reaching ``max_instructions``
    executed instructions, on a mnemonic or operand form outside the
    supported set, or on a fault (division error, branch to a missing label,
    running off the end of the listing).
    """
    return _Executor(_as_function(f), seed, max_instructions).run()


def compare_traces(ta: ExecutionTrace, tb: ExecutionTrace) -> RuntimeScore:
    return RuntimeScore(
        rax_equal=ta.final_rax == tb.final_rax,
        stack_equal=ta.final_rsp == tb.final_rsp and ta.final_rbp == tb.final_rbp,
        trace_equal=ta.events == tb.events,
    )


def runtime_similarity(a, b, seed, max_instructions=MAX_INSTRUCTIONS) -> RuntimeScore:
    """Three-indicator runtime similarity of two listings under one seed."""
    return compare_traces(execute(a, seed, max_instructions), execute(b, seed, max_instructions))

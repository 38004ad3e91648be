# Parsing a disassembler listing and turning it into tokens.
from asmsearch import parse_assembly, render, tokenize

listing = """
clamp_add       proc near
                mov     eax, edi
                add     eax, [rsi+rdx*4+10h]
                cmp     eax, 64h
                jle     short loc_12
                mov     eax, 64h
loc_12:
                retn
clamp_add       endp
"""

f = parse_assembly(listing)
print(f.name, len(f.instructions), "instructions, labels:", f.labels)

# operands are typed: registers, immediates, memory references, labels
for ins in f.instructions:
    print(f"  {ins.mnemonic:6s}", ins.operands)

# hex suffixes are normalized, so the canonical text is stable across disassemblers
print(render(f))

# tokens come from the canonical rendering; token_count is what the length buckets use
print(tokenize(f))
print("token_count =", f.token_count)

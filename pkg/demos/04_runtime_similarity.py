# Emulating two listings from the same random machine state and comparing the outcome.
from asmsearch import execute, runtime_similarity

# two ways to compute rdi = 8 * (rax + 1); the first truncates rax+1 to 32 bits
a = "lea edi, [rax+1]\nshl rdi, 3\nmov rax, rdi\nret"
b = "lea rdi, [rax*8+8]\nmov rax, rdi\nret"

for seed in range(3):
    print(seed, runtime_similarity(a, b, seed))

# once rax holds a 32-bit value the two agree
prefix = "mov eax, esi\n"
print([runtime_similarity(prefix + a, prefix + b, s).value for s in range(10)])

# memory traffic is part of the comparison
tr = execute("mov [rsp-8], rdi\nmov rax, [rsp-8]\nadd rax, 1\nret", seed=1)
for ev in tr.events:
    print(ev)
print(hex(tr.final_rax), tr.halt_reason, tr.executed_count)

# an endless loop stops at the instruction cap
print(execute("top:\n jmp top", seed=0).halt_reason)

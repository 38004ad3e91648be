# Searching a pool of listings with bag-of-token vectors and scoring the ranking.
import numpy as np

from asmsearch import EmbeddingMatrix, QueryRecord, bag_of_tokens, evaluate, search_topk

rng = np.random.default_rng(1)
ops = ["add", "sub", "xor", "imul", "and", "or"]
regs = ["rax", "rbx", "rcx", "rdx", "rsi", "rdi"]


def listing():
    lines = [f"{rng.choice(ops)} {rng.choice(regs)}, {rng.choice(regs)}" for _ in range(rng.integers(3, 12))]
    return "\n".join(lines + ["ret"])


texts = [listing() for _ in range(500)]
ids = tuple(f"fn{i:03d}" for i in range(500))
pool = EmbeddingMatrix(ids, bag_of_tokens(texts, dim=64))

# queries reuse half of a target's lines
targets = rng.choice(500, size=20, replace=False)
queries = [QueryRecord(f"q{i}", "", frozenset([ids[t]])) for i, t in enumerate(targets)]
qtexts = ["\n".join(texts[t].splitlines()[::2]) for t in targets]
qemb = EmbeddingMatrix(tuple(q.id for q in queries), bag_of_tokens(qtexts, dim=64))

print(search_topk(qemb.values[0], pool, 5, cosine=True))

# raw dot products favour long listings; cosine undoes that for count vectors
for cosine in (False, True):
    rep = evaluate(queries, qemb, pool, pool_size=300, ks=(1, 5, 10), seed=0, cosine=cosine)
    print("cosine" if cosine else "dot   ", rep.to_json())

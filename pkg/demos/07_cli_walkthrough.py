# Driving the command line tool end to end on a throwaway workspace.
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from asmsearch import render
from asmsearch.dataset import CompilationProfile, PairRecord, SourceFunction, write_corpus
from asmsearch.embeddings import EmbeddingMatrix, bag_of_tokens, write_aemb


def asmsearch(*argv):
    cmd = [sys.executable, "-m", "asmsearch.cli", *map(str, argv)]
    print("$ asmsearch", " ".join(map(str, argv)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout.rstrip()[:600])
    if done.stderr:
        print("stderr:", done.stderr.rstrip()[:300])
    print("exit", done.returncode, "\n")


work = Path(tempfile.mkdtemp(prefix="asmsearch-demo-"))
rng = np.random.default_rng(5)

body = "int t = x;\n/* scale */\nt *= 3;\nt += y;\nt ^= 7;\nreturn t;"
refs, cands = [], []
for i in range(40):
    k = int(rng.integers(1, 9))
    asm = f"f{i}:\n mov eax, edi\n imul eax, eax, 3\n add eax, esi\n add eax, {k}\n ret"
    alt = f"f{i}:\n lea eax, [rdi+rdi*2]\n add eax, esi\n add eax, {k if i % 4 else k + 1}\n ret"
    src = SourceFunction(f"f{i}", "c", body, "Mixes x and y.\n\nMore words.")
    refs.append(PairRecord(f"id{i:02d}", src, asm, CompilationProfile("gcc-9", "O1")))
    cands.append(PairRecord(f"id{i:02d}", src, alt, CompilationProfile("gcc-9", "O1")))
with open(work / "ref.jsonl", "w") as f:
    write_corpus(refs, f)
with open(work / "cand.jsonl", "w") as f:
    write_corpus(cands, f)

asmsearch("parse-check", work / "ref.jsonl")
asmsearch("build-dataset", work / "ref.jsonl", "--strip-comments", "--clean-docstrings", "--assign-profiles",
          "--seed", 2, "--out", work / "clean.jsonl")
asmsearch("eval-seq", "--reference", work / "ref.jsonl", "--candidate", work / "cand.jsonl")
asmsearch("eval-runtime", "--reference", work / "ref.jsonl", "--candidate", work / "cand.jsonl", "--seed", 1,
          "--out", work / "runtime.jsonl")
print("last line:", (work / "runtime.jsonl").read_text().splitlines()[-1], "\n")

# embeddings are AEMB files: a small header, the ids, then float32 rows
ids = tuple(r.id for r in refs)
write_aemb(work / "texts.aemb", EmbeddingMatrix(ids, rng.standard_normal((40, 16)).astype(np.float32)))
write_aemb(work / "asms.aemb", EmbeddingMatrix(ids, rng.standard_normal((40, 16)).astype(np.float32)))
asmsearch("infonce", "--texts", work / "texts.aemb", "--asms", work / "asms.aemb", "--normalize")

# retrieval over the reference listings, querying with the candidate listings
write_aemb(work / "pool.aemb", EmbeddingMatrix(ids, bag_of_tokens([render(r.assembly) for r in refs], dim=64)))
write_aemb(work / "q.aemb", EmbeddingMatrix(tuple(f"q{i}" for i in range(40)),
                                            bag_of_tokens([render(c.assembly) for c in cands], dim=64)))
with open(work / "queries.jsonl", "w") as f:
    for i in range(40):
        f.write(json.dumps({"id": f"q{i}", "text": "", "relevant_ids": [f"id{i:02d}"]}) + "\n")
asmsearch("eval-retrieval", "--queries", work / "queries.jsonl", "--query-emb", work / "q.aemb",
          "--pool-emb", work / "pool.aemb", "--pool-size", 40, "--k", "1,5,10", "--cosine")

# a line that is not a valid record stops the run with exit code 2
(work / "broken.jsonl").write_text('{"id": "x"}\nnot json\n')
asmsearch("parse-check", work / "broken.jsonl")

# a well-formed record whose listing does not parse is counted instead
bad = refs[0].to_dict() | {"id": "bad", "assembly_text": "f:\n movl $1, %eax\n ret"}
(work / "mixed.jsonl").write_text((work / "ref.jsonl").read_text() + json.dumps(bad) + "\n")
asmsearch("parse-check", work / "mixed.jsonl")

import json

import numpy as np
import pytest

from asmsearch.embeddings import EmbeddingMatrix, bag_of_tokens, write_aemb
from synth import candidate_records, retrieval_workload, synthetic_records, write_jsonl


@pytest.fixture(scope="session")
def cli_inputs(tmp_path_factory):
    """Input files for every CLI subcommand."""
    d = tmp_path_factory.mktemp("cli_inputs")
    recs = synthetic_records()
    paths = {
        "corpus": write_jsonl(d / "corpus.jsonl", recs),
        "candidates": write_jsonl(d / "candidates.jsonl", candidate_records(recs)),
    }
    batch = recs[:32]
    texts = bag_of_tokens([r.source.docstring for r in batch], 32) * 0.1
    asms = bag_of_tokens([r.assembly_text for r in batch], 32) * 0.1
    ids = tuple(r.id for r in batch)
    paths["texts"] = d / "texts.aemb"
    paths["asms"] = d / "asms.aemb"
    write_aemb(paths["texts"], EmbeddingMatrix(ids, texts))
    write_aemb(paths["asms"], EmbeddingMatrix(ids, asms + 0.01 * np.arange(32)[:, None]))

    pool, queries, qemb = retrieval_workload()
    paths["pool"] = d / "pool.aemb"
    paths["query_emb"] = d / "query.aemb"
    paths["queries"] = d / "queries.jsonl"
    write_aemb(paths["pool"], pool)
    write_aemb(paths["query_emb"], qemb)
    with open(paths["queries"], "w") as fh:
        for q in queries:
            fh.write(json.dumps(q) + "\n")
    return paths


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

"""Toolkit for natural-language search over assembly functions.

Parsing and tokenizing Intel-syntax listings, building filtered text/assembly
pair corpora, sequence and emulated-runtime similarity metrics, an in-batch
contrastive loss, and brute-force retrieval evaluation.
"""
from .asm import (AssemblyFunction, Immediate, Instruction, LabelRef, Memory, Register, parse_assembly,
                  render, tokenize)
from .contrastive import LossReport, infonce_grad, infonce_loss
from .dataset import (CompilationProfile, FilterReport, PairRecord, SourceFunction, assign_profile,
                      clean_docstring, filter_pairs, read_corpus, sample_mix, strip_comments, write_corpus)
from .embeddings import EmbeddingMatrix, bag_of_tokens, read_aemb, write_aemb
from .emu import ExecutionTrace, MemoryEvent, RuntimeScore, execute, runtime_similarity
from .errors import AsmSearchError
from .retrieval import (EvalReport, QueryRecord, RetrievalResult, build_pool, evaluate, mean_ap, recall_at_k,
                        search_topk)
from .seqmetrics import MetricScore, bleu, meteor, rouge_l

__version__ = "0.1.0"

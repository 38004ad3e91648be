"""Command-line entry point: ``asmsearch <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on malformed input
(the offending line number goes to standard error).  Results go to standard
output or ``--out``; progress messages go to standard error.  Every
subcommand produces byte-identical output for any ``--workers`` value.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import replace
from functools import partial
from itertools import zip_longest

from . import dataset as ds
from .asm import parse_assembly, tokenize
from .contrastive import TEMPERATURE, infonce_grad, infonce_loss
from .embeddings import EmbeddingMatrix, read_aemb, write_aemb
from .emu import MAX_INSTRUCTIONS, execute, compare_traces
from .errors import AsmSearchError, MalformedRecord
from .parallel import chunked, parallel_map
from .retrieval import DEFAULT_KS, POOL_SIZE, evaluate, read_queries
from .seqmetrics import mean_scores, score_pair

log = logging.getLogger("asmsearch")

SUBCOMMANDS = ("build-dataset", "clean-docstrings", "eval-seq", "eval-runtime", "infonce",
               "eval-retrieval", "parse-check")
BATCH = 4096


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yield fh


def _open_text(path):
    if path == "-":
        return sys.stdin
    return open(path, encoding="utf-8")


def _batched_map(fn, items, workers):
    """Map ``fn`` over a stream in bounded batches, preserving order."""
    batch = []

    def flush():
        chunks = chunked(batch, workers)
        for out in parallel_map(partial(_apply_all, fn), chunks, workers):
            yield from out

    for item in items:
        batch.append(item)
        if len(batch) >= BATCH:
            yield from flush()
            batch = []
    if batch:
        yield from flush()


def _apply_all(fn, items):
    return [fn(x) for x in items]


# -- build-dataset / clean-docstrings ----------------------------------------

def _prepare(opts, item):
    line_no, rec = item
    src = rec.source
    try:
        if opts["strip_comments"]:
            src = ds.strip_source_comments(src)
        if opts["clean_docstrings"] and src.docstring is not None:
            src = replace(src, docstring=ds.clean_docstring(src.docstring, opts["min_words"]))
        rec = replace(rec, source=src)
        if opts["assign_profiles"]:
            rec = replace(rec, profile=ds.assign_profile(opts["seed"], rec.id))
        reason = ds.drop_reason(rec, opts["min_body_lines"], opts["infer_inline"])
        tokens = rec.token_count if opts["mix"] and reason is None else None
    except AsmSearchError as e:
        return line_no, None, f"{type(e).__name__}: {e}", None
    return line_no, rec, reason, tokens


def cmd_build_dataset(args):
    opts = {
        "strip_comments": args.strip_comments,
        "clean_docstrings": args.clean_docstrings,
        "min_words": args.min_words,
        "assign_profiles": args.assign_profiles,
        "seed": args.seed,
        "min_body_lines": args.min_body_lines,
        "infer_inline": args.infer_inline,
        "mix": args.mix,
    }
    report = ds.FilterReport()
    with _open_text(args.input) as fh:
        prepared = _batched_map(partial(_prepare, opts), ds.iter_records(fh), args.workers)

        def survivors():
            for line_no, rec, reason, tokens in prepared:
                if rec is None:
                    raise MalformedRecord(line_no, reason)
                report.input += 1
                if reason == "inline":
                    report.dropped_inline += 1
                elif reason == "short":
                    report.dropped_short += 1
                else:
                    report.output += 1
                    yield rec, tokens

        with _output(args.out) as out:
            if args.mix:
                mixed = ds.sample_mix(survivors(), args.seed, token_count=lambda rt: rt[1])
                ds.write_corpus((rec for rec, _ in mixed), out)
            else:
                ds.write_corpus((rec for rec, _ in survivors()), out)
    text = json.dumps(report.to_dict())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text, file=sys.stdout if args.out else sys.stderr)
    log.info("kept %d of %d records", report.output, report.input)
    return 0


def _clean_one(min_words, item):
    line_no, rec = item
    doc = rec.source.docstring
    cleaned = ds.clean_docstring(doc, min_words) if doc is not None else None
    return replace(rec, source=replace(rec.source, docstring=cleaned))


def cmd_clean_docstrings(args):
    kept = dropped = 0
    with _open_text(args.input) as fh, _output(args.out) as out:
        for rec in _batched_map(partial(_clean_one, args.min_words), ds.iter_records(fh), args.workers):
            if rec.source.docstring is None and args.drop_empty:
                dropped += 1
                continue
            kept += 1
            out.write(ds.dumps_record(rec) + "\n")
    log.info("wrote %d records, dropped %d without a usable docstring", kept, dropped)
    return 0


# -- evaluation ------------------------------------------------------------------

def _aligned_pairs(ref_path, cand_path):
    """Yield ``(id, ref_line, ref_record, cand_line, cand_record)``.

    Both corpora are streamed in lockstep, so they must list the same ids in
    the same order; the first disagreement is reported as malformed input.
    """
    with _open_text(ref_path) as rf, _open_text(cand_path) as cf:
        refs, cands = ds.iter_records(rf), ds.iter_records(cf)
        for ref_item, cand_item in zip_longest(refs, cands):
            if cand_item is None:
                raise MalformedRecord(ref_item[0], f"id {ref_item[1].id!r} has no counterpart in {cand_path}")
            if ref_item is None:
                raise MalformedRecord(cand_item[0], f"id {cand_item[1].id!r} has no counterpart in {ref_path}")
            (r_line, ref), (c_line, cand) = ref_item, cand_item
            if ref.id != cand.id:
                raise MalformedRecord(c_line, f"candidate id {cand.id!r} does not match reference id {ref.id!r} "
                                              f"(reference line {r_line}); both files must list ids in the same order")
            yield ref.id, r_line, ref, c_line, cand


def _parse_pair(item):
    id_, r_line, ref, c_line, cand = item
    try:
        fa = parse_assembly(ref.assembly_text)
    except AsmSearchError as e:
        return id_, ("reference", r_line, str(e)), None, None
    try:
        fb = parse_assembly(cand.assembly_text)
    except AsmSearchError as e:
        return id_, ("candidate", c_line, str(e)), None, None
    return id_, None, fa, fb


def _seq_one(max_n, item):
    id_, err, fa, fb = _parse_pair(item)
    if err:
        return id_, err, None
    try:
        return id_, None, score_pair(tokenize(fb), tokenize(fa), max_n)
    except AsmSearchError as e:
        return id_, ("candidate", item[3], str(e)), None


def _raise_pair_error(err):
    which, line_no, msg = err
    raise MalformedRecord(line_no, f"{which} assembly: {msg}")


def cmd_eval_seq(args):
    per_pair = []
    csv_fh = open(args.per_pair, "w", encoding="utf-8", newline="") if args.per_pair else None
    try:
        writer = csv.writer(csv_fh, lineterminator="\n") if csv_fh else None
        if writer:
            writer.writerow(["id", "bleu", "rouge_l", "meteor"])
        for id_, err, scores in _batched_map(partial(_seq_one, args.max_n),
                                             _aligned_pairs(args.reference, args.candidate), args.workers):
            if err:
                _raise_pair_error(err)
            per_pair.append(scores)
            if writer:
                writer.writerow([id_, repr(scores["bleu"]), repr(scores["rouge_l"]), repr(scores["meteor"])])
    finally:
        if csv_fh:
            csv_fh.close()
    with _output(args.out) as out:
        out.write(json.dumps(mean_scores(per_pair)) + "\n")
    return 0


def _runtime_one(seed, max_instructions, item):
    id_, err, fa, fb = _parse_pair(item)
    if err:
        return id_, err, None
    ta = execute(fa, seed, max_instructions)
    tb = execute(fb, seed, max_instructions)
    s = compare_traces(ta, tb)
    return id_, None, {
        "id": id_, "rax_equal": s.rax_equal, "stack_equal": s.stack_equal,
        "trace_equal": s.trace_equal, "value": s.value,
        "halt_a": ta.halt_reason, "halt_b": tb.halt_reason,
    }


def cmd_eval_runtime(args):
    values = []
    fn = partial(_runtime_one, args.seed, args.max_instructions)
    with _output(args.out) as out:
        for id_, err, row in _batched_map(fn, _aligned_pairs(args.reference, args.candidate), args.workers):
            if err:
                _raise_pair_error(err)
            values.append(row["value"])
            out.write(json.dumps(row) + "\n")
        mean = math.fsum(values) / len(values) if values else 0.0
        out.write(json.dumps({"mean": mean, "n_pairs": len(values)}) + "\n")
    return 0


def cmd_infonce(args):
    texts = read_aemb(args.texts)
    asms = read_aemb(args.asms)
    report = infonce_loss(texts, asms, args.temperature, normalize=args.normalize)
    if args.grad_out:
        gt, ga = infonce_grad(texts, asms, args.temperature, normalize=args.normalize)
        write_aemb(args.grad_out + ".texts.aemb", EmbeddingMatrix(texts.ids, gt))
        write_aemb(args.grad_out + ".asms.aemb", EmbeddingMatrix(asms.ids, ga))
    with _output(args.out) as out:
        out.write(json.dumps(report.to_dict()) + "\n")
    return 0


def _parse_ks(text):
    try:
        ks = tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def cmd_eval_retrieval(args):
    with _open_text(args.queries) as fh:
        queries = read_queries(fh)
    report = evaluate(queries, read_aemb(args.query_emb), read_aemb(args.pool_emb), args.pool_size,
                      args.k, args.seed, cosine=args.cosine, workers=args.workers)
    with _output(args.out) as out:
        out.write(report.to_json() + "\n")
    return 0


def _check_one(item):
    line_no, rec = item
    try:
        parse_assembly(rec.assembly_text)
    except AsmSearchError as e:
        return line_no, rec.id, str(e)
    return None


def cmd_parse_check(args):
    n = bad = 0
    with _open_text(args.input) as fh:
        items = ds.iter_records(fh)
        for res in _batched_map(_check_one, items, args.workers):
            n += 1
            if res is not None:
                bad += 1
                line_no, id_, msg = res
                print(f"line {line_no}: {id_}: {msg}", file=sys.stderr)
    with _output(args.out) as out:
        out.write(f"{n} records, {bad} malformed\n")
    return 2 if bad else 0


# -- argument parsing ---------------------------------------------------------------

def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _common(p, seed=False):
    p.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                   help="suppress progress messages")
    p.add_argument("--workers", type=_positive, default=1, help="worker processes (default 1)")
    p.add_argument("--out", help="write results here instead of standard output")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="64-bit seed (default 0)")


def build_parser():
    parser = _Parser(prog="asmsearch", description="Assembly code search toolkit.")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress messages")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build-dataset", help="clean, filter and sample a pair corpus")
    p.add_argument("input", help="corpus JSON-lines file ('-' for stdin)")
    _common(p, seed=True)
    p.add_argument("--report", help="also write the FilterReport JSON to this file")
    p.add_argument("--min-body-lines", type=int, default=5,
                   help="drop functions with fewer non-empty body lines (default 5)")
    p.add_argument("--strip-comments", action="store_true", help="remove source comments first")
    p.add_argument("--clean-docstrings", action="store_true", help="apply the docstring cleaner")
    p.add_argument("--min-words", type=int, default=4, help="shortest docstring kept (default 4)")
    p.add_argument("--assign-profiles", action="store_true",
                   help="replace each profile with a seeded random compiler/level/stripped choice")
    p.add_argument("--infer-inline", action="store_true",
                   help="also treat multi-symbol assembly as inlined")
    p.add_argument("--mix", action="store_true", help="3:1 short/long token-length interleave")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("clean-docstrings", help="clean the docstring of every record")
    p.add_argument("input")
    _common(p)
    p.add_argument("--min-words", type=int, default=4)
    p.add_argument("--drop-empty", action="store_true", help="drop records left without a docstring")
    p.set_defaults(func=cmd_clean_docstrings)

    for name, func, help_ in (("eval-seq", cmd_eval_seq, "BLEU / ROUGE-L / METEOR of candidate vs reference"),
                              ("eval-runtime", cmd_eval_runtime, "emulated runtime similarity")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--reference", required=True, help="reference corpus (e.g. real compiler output)")
        p.add_argument("--candidate", required=True, help="candidate corpus, joined to the reference by id")
        p.set_defaults(func=func)
        if name == "eval-seq":
            _common(p)
            p.add_argument("--max-n", type=_positive, default=4, help="BLEU n-gram order (default 4)")
            p.add_argument("--per-pair", help="write per-pair scores as CSV")
        else:
            _common(p, seed=True)
            p.add_argument("--max-instructions", type=_positive, default=MAX_INSTRUCTIONS)

    p = sub.add_parser("infonce", help="InfoNCE loss of two AEMB embedding files")
    p.add_argument("--texts", required=True)
    p.add_argument("--asms", required=True)
    p.add_argument("--temperature", type=float, default=TEMPERATURE)
    p.add_argument("--normalize", action="store_true", help="cosine instead of dot-product similarity")
    p.add_argument("--grad-out", help="dump gradients to PREFIX.texts.aemb and PREFIX.asms.aemb")
    _common(p)
    p.set_defaults(func=cmd_infonce)

    p = sub.add_parser("eval-retrieval", help="recall@k and MAP over a sampled pool")
    p.add_argument("--queries", required=True, help="judgments JSON-lines file")
    p.add_argument("--query-emb", required=True)
    p.add_argument("--pool-emb", required=True)
    p.add_argument("--pool-size", type=_positive, default=POOL_SIZE)
    p.add_argument("--k", type=_parse_ks, default=DEFAULT_KS, help="comma-separated cutoffs (default 1,5,10,20)")
    p.add_argument("--cosine", action="store_true")
    _common(p, seed=True)
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("parse-check", help="parse every record's assembly and count failures")
    p.add_argument("input")
    _common(p)
    p.set_defaults(func=cmd_parse_check)
    return parser


def run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except MalformedRecord as e:
        print(f"asmsearch: malformed input: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"asmsearch: error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

# Cleaning, filtering and mixing a small pair corpus in memory.
import io

from asmsearch.dataset import (CompilationProfile, FilterReport, PairRecord, SourceFunction, assign_profile,
                               clean_docstring, filter_pairs, read_corpus, sample_mix, strip_source_comments,
                               write_corpus)

ASM = "f:\n push rbp\n mov rbp, rsp\n mov eax, edi\n pop rbp\n ret\n"
body_long = "int s = 0; // running sum\nfor (int i = 0; i < n; i++)\n  s += a[i];\n/* done */\nreturn s;\nint unused;"
body_short = "return a + b;"

records = []
for i in range(12):
    body = body_short if i % 3 == 0 else body_long
    src = SourceFunction(f"f{i}", "c", body, "/**\n * Sums the first n entries.\n *\n * @param a array\n */")
    records.append(PairRecord(f"rec{i}", src, ASM, CompilationProfile("gcc-9", "O2"), inline_flag=(i == 4)))

# comments out, docstring down to its first paragraph
src = strip_source_comments(records[1].source)
print(repr(src.body), src.body_line_count, "lines")
print(repr(clean_docstring(records[1].source.docstring)))

# filtering keeps a running count of why records were dropped
report = FilterReport()
kept = list(filter_pairs(records, min_body_lines=5, report=report))
print(report.to_dict())

# a seeded compiler/level choice per record id
for r in kept[:3]:
    print(r.id, assign_profile(7, r.id))

# 3:1 interleave of short and long records (token counts faked here)
mixed = list(sample_mix(kept, 0, token_count=lambda r: 3000 if r.id.endswith(("2", "8")) else 500))
print([r.id for r in mixed])

# the corpus format is JSON lines, one record per line
buf = io.StringIO()
write_corpus(kept, buf)
print(buf.getvalue().splitlines()[0][:120], "...")
print(len(list(read_corpus(io.StringIO(buf.getvalue())))), "records read back")

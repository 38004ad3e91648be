# Token-level similarity between a reference listing and a candidate.
from asmsearch import bleu, meteor, parse_assembly, rouge_l, tokenize

reference = tokenize(parse_assembly("f:\n lea eax, [rdi+1]\n shl eax, 3\n ret"))
candidate = tokenize(parse_assembly("f:\n lea eax, [rdi*8+8]\n ret"))
print(reference)
print(candidate)

for metric in (bleu, rouge_l, meteor):
    print(f"{metric.__name__:8s} {metric(candidate, reference).value:.4f}")

# identical inputs; METEOR keeps a small fragmentation penalty even for one chunk
print(meteor(reference, reference).value)

# order matters to ROUGE-L and METEOR but not to unigram overlap
print(rouge_l(reference[::-1], reference).value, meteor(reference[::-1], reference).value)

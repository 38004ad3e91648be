# The in-batch contrastive loss and its gradients on a toy batch.
import numpy as np

from asmsearch import infonce_grad, infonce_loss

rng = np.random.default_rng(0)
n, d = 6, 8
texts = rng.standard_normal((n, d)) / np.sqrt(d)
asms = texts + 0.3 * rng.standard_normal((n, d)) / np.sqrt(d)  # paired rows are close

print(infonce_loss(texts, asms))              # temperature 0.07 by default
print(infonce_loss(texts, rng.permutation(asms)))  # break the pairing: the loss goes up

# a few steps of plain gradient descent on the assembly side
for step in range(5):
    _, g_asm = infonce_grad(texts, asms)
    asms = asms - 0.01 * g_asm
    print(step, round(infonce_loss(texts, asms).total, 6))

# cosine similarity instead of raw dot products
print(infonce_loss(texts, asms, normalize=True))

"""Pooling patch descriptors under multiple attention scores.

The descriptor matrix has one column per patch. Two bias-free layers
produce a score matrix whose rows are distributions over patches; the
pooled output keeps one rectified weighted average per score row.
"""

import numpy as np

from mrscene.attention import attention_scores, pool_descriptors
from mrscene.tensor import Tensor

rng = np.random.default_rng(3)
d_phi, n_patches, d_hidden, n_heads = 10, 16, 6, 4

omega = Tensor(rng.normal(size=(d_phi, n_patches)))
w_hidden = Tensor(rng.normal(size=(d_hidden, d_phi)))
w_heads = Tensor(rng.normal(size=(n_heads, d_hidden)))

print("== score matrix ==")
scores = attention_scores(omega, w_hidden, w_heads)
print(f"shape {scores.shape}: {n_heads} score rows over {n_patches} patches")
print("row sums:", " ".join(f"{s:.9f}" for s in scores.data.sum(axis=1)))
print("entries in [0,1]:", bool((scores.data >= 0).all() and (scores.data <= 1).all()))

print("\n== zero head weights collapse to uniform attention ==")
uniform = attention_scores(omega, w_hidden, Tensor(np.zeros((n_heads, d_hidden))))
print(f"every entry equals 1/{n_patches}: {bool(np.all(uniform.data == 1.0 / n_patches))}")

print("\n== pooling ==")
pooled = pool_descriptors(omega, scores)
print(f"pooled descriptor matrix {pooled.shape}, all entries >= 0: {bool((pooled.data >= 0).all())}")

print("\n== each column is a rectified convex combination of patches ==")
t = 2
weights = scores.data[t]
combo = (omega.data * weights).sum(axis=1)
print(f"  head {t} weights sum to {weights.sum():.9f}")
print(f"  max |pooled[:, {t}] - max(0, weighted avg)| = "
      f"{np.abs(pooled.data[:, t] - np.maximum(0, combo)).max():.2e}")

print("\n== a one-hot score row just selects a patch ==")
one_hot = np.zeros((1, n_patches))
one_hot[0, 7] = 1.0
selected = pool_descriptors(omega, Tensor(one_hot))
print("matches max(0, patch 7):", bool(np.array_equal(selected.data[:, 0], np.maximum(0, omega.data[:, 7]))))

"""Jittering embeddings on the unit hypersphere.

Augmentation happens in embedding space, not on the raw series: each
projected point gets m noisy copies carrying the original label, and the
expanded batch is re-normalized onto the sphere. More copies mean more
anchor-positive pairs for the rank loss.
"""

import numpy as np

from rankcontrast import AugmentConfig, RankLossConfig, expand_batch, jitter, rank_loss
from rankcontrast.rng import seeded_rng

rng = np.random.default_rng(3)
z = rng.normal(size=(4, 8))
z /= np.linalg.norm(z, axis=1, keepdims=True)
labels = np.array([0, 0, 1, 1])

# one jitter draw at each configured scale
for alpha in (0.03, 0.05):
    noisy = jitter(z, alpha, seeded_rng(0))
    shift = np.linalg.norm(noisy - z, axis=1).mean()
    print(f"alpha={alpha}: mean displacement {shift:.4f} "
          f"(about alpha * sqrt(D) = {alpha * np.sqrt(z.shape[1]):.4f})")

config = AugmentConfig(num_augments_per_instance=5, scales=(0.03, 0.05), rng_seed=0)
batch = expand_batch(z, labels, config, seeded_rng(0))
print(f"\nexpanded batch: {z.shape[0]} instances -> {batch.z.shape[0]} rows "
      f"({int(batch.is_augmented.sum())} augmented)")
print("row norms stay on the sphere:",
      np.round(np.linalg.norm(batch.z, axis=1), 6)[:6], "...")
print("copy labels repeat their source labels:", batch.labels.tolist())

# the loss sees the copies as ordinary batch members, so the number of
# anchor-positive pairs grows quadratically with 1 + m
for m in (0, 5):
    cfg = AugmentConfig(num_augments_per_instance=m, scales=(0.03, 0.05), rng_seed=0)
    expanded = expand_batch(z, labels, cfg, seeded_rng(0))
    result = rank_loss(expanded.z, expanded.labels, RankLossConfig())
    print(f"m={m}: {result.num_pairs} anchor-positive pairs, loss {result.loss:.4f}")

"""A tour of the rank loss on a tiny hand-built batch.

Six points in the plane, three classes. We look at the pairwise
distances, which triplets count as "valid hard", how the integer rank
relates to its sigmoid relaxation, and why the arctan mapping
down-weights badly ranked positives.
"""

import numpy as np

from rankcontrast import (RankLossConfig, hard_rank, pairwise_distances,
                          rank_loss, soft_rank, valid_triplets)

z = np.array([
    [0.0, 0.0],   # class 0
    [0.6, 0.0],   # class 0, fairly close to its partner
    [0.3, 0.2],   # class 1, sitting between the class-0 points
    [2.0, 2.0],   # class 1, far away
    [0.0, 2.5],   # class 2
    [0.2, 2.6],   # class 2
])
labels = np.array([0, 0, 1, 1, 2, 2])

dist = pairwise_distances(z)
print("pairwise distances:")
print(np.round(dist.d, 3))

# A triplet (a, p, n) is worth training on when the negative n sits
# closer to the anchor than the positive p does.
triplets = valid_triplets(dist, labels)
print(f"\nvalid hard triplets (anchor, positive, negative): {len(triplets)}")
for a, p, n in triplets:
    print(f"  ({a}, {p}, {n}): d(a,n)={dist.d[a, n]:.3f} < d(a,p)={dist.d[a, p]:.3f}")

# The hard rank counts negatives at least as close as the positive; the
# soft rank replaces the counting indicator with a sigmoid so it is
# differentiable.
print("\npair (0, 1): the class-1 point at (0.3, 0.2) intrudes")
print(f"  hard rank: {hard_rank(dist, labels, 0, 1)}")
print(f"  soft rank: {soft_rank(dist, labels, 0, 1):.4f}")
print(f"  soft rank at temperature 1e-3: {soft_rank(dist, labels, 0, 1, temperature=1e-3):.6f}"
      "  (sharpened toward the integer)")

# The loss maps each pair's soft rank through arctan. Its derivative
# 1/(1+R^2) shrinks as R grows: a positive with many intruding negatives
# is probably an outlier and should not dominate the gradient.
result = rank_loss(z, labels, RankLossConfig())
print(f"\nmean arctan rank loss over {result.num_pairs} pairs: {result.loss:.4f}")
print("per-pair soft ranks:", {tuple(pair): round(float(value), 3)
                               for pair, value in zip(result.pairs.tolist(),
                                                      result.soft_ranks)})
for r in (0.0, 1.0, 5.0):
    print(f"  marginal weight d/dR arctan(R) at R={r}: {1.0 / (1.0 + r * r):.3f}")

print("\ngradient w.r.t. the embeddings (rows sum to the pull on each point):")
print(np.round(result.grad_z, 4))

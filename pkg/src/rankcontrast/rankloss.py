"""Rank-weighted contrastive loss on embedding distances.

For an anchor ``a`` and a same-label positive ``p``, the rank of the
pair counts how many different-label negatives sit at least as close to
the anchor as the positive does. The training loss relaxes that count
with a sigmoid over distance differences so it is differentiable, then
maps it through arctan so poorly ranked (likely outlier) positives get a
vanishing marginal weight. Everything here operates on a plain [B, D]
embedding array plus integer labels and returns exact analytic
gradients; there is no autodiff.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError, NumericError

# keeps the distance gradient finite when two embeddings coincide
DISTANCE_EPSILON = 1e-12

# upper bound on the scratch tensor (anchors x positives x negatives)
# materialized per vectorized chunk
_CHUNK_ELEMENT_BUDGET = 4_000_000


@dataclass
class DistanceMatrix:
    """Pairwise Euclidean distances with their squared counterparts."""

    d: np.ndarray
    d_sq: np.ndarray


@dataclass
class RankLossConfig:
    """Knobs for the rank loss.

    normalization: "mean" divides the summed pair losses by the pair
        count so gradient scale is batch-size independent; "sum" keeps
        the literal double sum.
    negative_domain: "all" sums the sigmoid terms over every negative of
        the anchor; "valid-only" restricts to negatives strictly closer
        than the positive.
    temperature: divides the sigmoid argument; tau -> 0 sharpens the
        relaxation toward the integer rank.
    compute_ranks: also materialize per-pair soft/hard rank tables
        (training loops turn this off; it does not affect loss/grad).
    """

    normalization: str = "mean"
    negative_domain: str = "all"
    temperature: float = 1.0
    compute_ranks: bool = True

    def __post_init__(self):
        if self.normalization not in ("mean", "sum"):
            raise ValueError(f"unknown normalization: {self.normalization!r}")
        if self.negative_domain not in ("all", "valid-only"):
            raise ValueError(f"unknown negative_domain: {self.negative_domain!r}")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass
class RankComputation:
    """Loss value, gradient, and (optionally) per-pair rank tables.

    ``pairs[k] = (a, p)`` indexes ``soft_ranks[k]`` and ``hard_ranks[k]``.
    """

    loss: float
    grad_z: np.ndarray
    num_pairs: int
    pairs: np.ndarray | None = None
    soft_ranks: np.ndarray | None = None
    hard_ranks: np.ndarray | None = None
    _index: dict | None = field(default=None, repr=False)

    def _pair_index(self):
        if self._index is None:
            self._index = {(int(a), int(p)): k for k, (a, p) in enumerate(self.pairs)}
        return self._index

    def soft_rank_of(self, a: int, p: int) -> float:
        return float(self.soft_ranks[self._pair_index()[(a, p)]])

    def hard_rank_of(self, a: int, p: int) -> int:
        return int(self.hard_ranks[self._pair_index()[(a, p)]])


def stable_sigmoid(k: np.ndarray) -> np.ndarray:
    """1 / (1 + e^-k), computed as (1 + tanh(k/2)) / 2.

    The tanh form never overflows and saturates to an exact 0 or 1 deep
    in the tails, so widely separated batches produce an exact zero
    loss. It is also a single-pass kernel, which matters on the large
    (anchor, positive, negative) tensors built by rank_loss.
    """
    out = np.multiply(k, 0.5)
    np.tanh(out, out=out)
    out += 1.0
    out *= 0.5
    return out


def pairwise_distances(z: np.ndarray) -> DistanceMatrix:
    """Euclidean distance matrix via the Gram identity.

    Squared distances are clamped at zero before the square root, and
    d = sqrt(d_sq + eps) - sqrt(eps) so the gradient stays finite when
    points coincide (the offset keeps d exactly 0 on the diagonal).
    """
    if z.ndim != 2 or z.shape[0] < 2:
        raise ContractError(f"pairwise_distances expects [B>=2, D], got {z.shape}")
    sq = (z * z).sum(axis=1)
    d_sq = sq[:, None] + sq[None, :] - 2.0 * (z @ z.T)
    np.maximum(d_sq, 0.0, out=d_sq)
    np.fill_diagonal(d_sq, 0.0)
    # the python-float constant keeps float32 inputs in float32
    d = np.sqrt(d_sq + DISTANCE_EPSILON) - float(np.sqrt(DISTANCE_EPSILON))
    np.fill_diagonal(d, 0.0)
    return DistanceMatrix(d=d, d_sq=d_sq)


def valid_triplets(dist: DistanceMatrix, labels: np.ndarray) -> np.ndarray:
    """All (anchor, positive, negative) triples with d(a,n) < d(a,p).

    Returns an integer array of shape [K, 3] in lexicographic (a, p, n)
    order. A batch without hard negatives yields an empty array.
    """
    labels = np.asarray(labels)
    d = dist.d
    b = d.shape[0]
    if labels.shape != (b,):
        raise ContractError(f"labels shape {labels.shape} does not match distances {d.shape}")
    same = labels[:, None] == labels[None, :]
    out = []
    for a in range(b):
        pos = same[a].copy()
        pos[a] = False
        neg = ~same[a]
        if not pos.any() or not neg.any():
            continue
        # cond[p, n] = pos[p] and neg[n] and d[a, n] < d[a, p]
        cond = pos[:, None] & neg[None, :] & (d[a][None, :] < d[a][:, None])
        pn = np.argwhere(cond)
        if len(pn):
            triples = np.empty((len(pn), 3), dtype=np.int64)
            triples[:, 0] = a
            triples[:, 1:] = pn
            out.append(triples)
    if not out:
        return np.empty((0, 3), dtype=np.int64)
    return np.concatenate(out, axis=0)


def _check_pair(labels: np.ndarray, a: int, p: int) -> None:
    if a == p:
        raise ContractError("anchor and positive must be distinct")
    if labels[a] != labels[p]:
        raise ContractError(f"labels differ: label[{a}]={labels[a]}, label[{p}]={labels[p]}")


def hard_rank(dist: DistanceMatrix, labels: np.ndarray, a: int, p: int) -> int:
    """Count of negatives n with d(a,n) <= d(a,p) (ties included)."""
    labels = np.asarray(labels)
    _check_pair(labels, a, p)
    neg = labels != labels[a]
    return int(np.count_nonzero(neg & (dist.d[a] <= dist.d[a, p])))


def soft_rank(dist: DistanceMatrix, labels: np.ndarray, a: int, p: int,
              negative_domain: str = "all", temperature: float = 1.0) -> float:
    """Sigmoid-relaxed rank: sum of sigma((d(a,p) - d(a,n)) / temperature)."""
    labels = np.asarray(labels)
    _check_pair(labels, a, p)
    neg = labels != labels[a]
    d_an = dist.d[a][neg]
    if negative_domain == "valid-only":
        d_an = d_an[d_an < dist.d[a, p]]
    elif negative_domain != "all":
        raise ValueError(f"unknown negative_domain: {negative_domain!r}")
    if d_an.size == 0:
        return 0.0
    return float(stable_sigmoid((dist.d[a, p] - d_an) / temperature).sum())


def rank_loss(z: np.ndarray, labels: np.ndarray,
              config: RankLossConfig | None = None) -> RankComputation:
    """Arctan-of-soft-rank loss over all same-label (anchor, positive) pairs.

    Every batch row acts as an anchor; positives are the other rows with
    the anchor's label, negatives are all rows with a different label.
    Returns the loss (mean over pairs by default), its exact gradient
    with respect to ``z``, and per-pair rank tables when requested.
    Batches without any (a, p) pair, or without negatives, yield loss 0
    and a zero gradient.
    """
    if config is None:
        config = RankLossConfig()
    z = np.asarray(z)
    labels = np.asarray(labels)
    if z.ndim != 2:
        raise ContractError(f"rank_loss expects z of shape [B, D], got {z.shape}")
    if labels.shape != (z.shape[0],):
        raise ContractError(f"labels shape {labels.shape} does not match z {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericError("rank_loss: embeddings contain non-finite values")

    b = z.shape[0]
    dist = pairwise_distances(z) if b >= 2 else None
    grad_d = np.zeros((b, b), dtype=z.dtype)
    loss_sum = 0.0
    num_pairs = 0
    pair_chunks, soft_chunks, hard_chunks = [], [], []

    if b >= 2:
        d = dist.d
        tau = config.temperature
        valid_only = config.negative_domain == "valid-only"
        for c in np.unique(labels):
            rows = np.flatnonzero(labels == c)
            negs = np.flatnonzero(labels != c)
            a_count, n_count = len(rows), len(negs)
            if a_count < 2:
                continue  # no (a, p) pair for this class
            num_pairs += a_count * (a_count - 1)
            if n_count == 0:
                # pairs exist but rank is an empty sum: arctan(0) adds nothing
                if config.compute_ranks:
                    aa, pp = np.where(~np.eye(a_count, dtype=bool))
                    pair_chunks.append(np.stack([rows[aa], rows[pp]], axis=1))
                    soft_chunks.append(np.zeros(len(aa)))
                    hard_chunks.append(np.zeros(len(aa), dtype=np.int64))
                continue
            d_pos = d[np.ix_(rows, rows)]
            d_neg = d[np.ix_(rows, negs)]
            chunk = max(1, _CHUNK_ELEMENT_BUDGET // (a_count * n_count))
            for start in range(0, a_count, chunk):
                stop = min(start + chunk, a_count)
                dp = d_pos[start:stop]                      # [A, P]
                dn = d_neg[start:stop]                      # [A, N]
                karg = dp[:, :, None] - dn[:, None, :]
                if tau != 1.0:
                    karg /= tau
                s = stable_sigmoid(karg)                    # [A, P, N]
                if valid_only:
                    s *= dn[:, None, :] < dp[:, :, None]
                # mask out a == p
                pair_ok = np.ones((stop - start, a_count), dtype=bool)
                pair_ok[np.arange(stop - start), np.arange(start, stop)] = False
                r_vals = s.sum(axis=2)                      # [A, P]
                loss_sum += float(np.arctan(r_vals[pair_ok]).sum())
                w = np.where(pair_ok, 1.0 / (1.0 + r_vals * r_vals), 0.0)
                # sigmoid derivative s * (1 - s), reusing karg as scratch;
                # masked entries of s are exactly 0 and stay 0
                g = karg
                np.multiply(s, s, out=g)
                np.subtract(s, g, out=g)
                if tau != 1.0:
                    g /= tau
                # dL/dd(a,p) and dL/dd(a,n) for this anchor chunk
                grad_ap = w * g.sum(axis=2)                 # [A, P]
                grad_an = -np.matmul(w[:, None, :].astype(g.dtype, copy=False), g)[:, 0, :]
                rows_chunk = rows[start:stop]
                grad_d[np.ix_(rows_chunk, rows)] += grad_ap.astype(grad_d.dtype)
                grad_d[np.ix_(rows_chunk, negs)] += grad_an.astype(grad_d.dtype)
                if config.compute_ranks:
                    aa, pp = np.where(pair_ok)
                    pair_chunks.append(np.stack([rows_chunk[aa], rows[pp]], axis=1))
                    soft_chunks.append(r_vals[aa, pp])
                    hard_counts = (dn[:, None, :] <= dp[:, :, None]).sum(axis=2)
                    hard_chunks.append(hard_counts[aa, pp].astype(np.int64))

    if num_pairs == 0:
        return RankComputation(
            loss=0.0, grad_z=np.zeros_like(z), num_pairs=0,
            pairs=np.empty((0, 2), dtype=np.int64) if config.compute_ranks else None,
            soft_ranks=np.empty(0) if config.compute_ranks else None,
            hard_ranks=np.empty(0, dtype=np.int64) if config.compute_ranks else None,
        )

    scale = 1.0 / num_pairs if config.normalization == "mean" else 1.0
    loss = loss_sum * scale

    # chain rule through d(i,j) = sqrt(d_sq + eps) - sqrt(eps)
    w_mat = grad_d / np.sqrt(dist.d_sq + DISTANCE_EPSILON)
    s_mat = w_mat + w_mat.T
    grad_z = (s_mat.sum(axis=1)[:, None] * z - s_mat @ z) * scale
    grad_z = grad_z.astype(z.dtype, copy=False)

    if config.compute_ranks:
        pairs = np.concatenate(pair_chunks, axis=0)
        soft = np.concatenate(soft_chunks, axis=0)
        hard = np.concatenate(hard_chunks, axis=0)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return RankComputation(loss=loss, grad_z=grad_z, num_pairs=num_pairs,
                               pairs=pairs[order], soft_ranks=soft[order],
                               hard_ranks=hard[order])
    return RankComputation(loss=loss, grad_z=grad_z, num_pairs=num_pairs)

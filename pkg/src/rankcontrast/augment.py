"""Embedding-space jittering augmentation.

Projected embeddings are expanded with noisy copies that keep their
source labels; the whole expanded batch is then re-normalized onto the
unit hypersphere. The noise is treated as a constant under
differentiation, so gradients of a downstream loss flow back to every
copy's source row.
"""

from dataclasses import dataclass

import numpy as np

from . import layers
from .exceptions import ConfigError
from .model import EmbeddingBatch
from .rng import gaussian


@dataclass
class AugmentConfig:
    """How many jittered copies to make per instance and at which scales.

    Copy j of an instance uses scales[j % len(scales)], so the default
    (0.03, 0.05) pair alternates between the two noise levels.
    """

    num_augments_per_instance: int = 5
    scales: tuple[float, ...] = (0.03, 0.05)
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_augments_per_instance < 0:
            raise ConfigError("num_augments_per_instance must be >= 0")
        if any(s <= 0 for s in self.scales):
            raise ConfigError("jitter scales must all be > 0")


def jitter(z: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise with standard deviation alpha.

    alpha == 0 returns the input values exactly (the draw still happens,
    keeping the stream position independent of alpha).
    """
    if alpha < 0:
        raise ConfigError("jitter scale must be >= 0")
    noise = gaussian(rng, z.shape, dtype=z.dtype)
    return z + alpha * noise


def expand_batch(z: np.ndarray, labels: np.ndarray, config: AugmentConfig,
                 rng: np.random.Generator, with_cache: bool = False):
    """Expand [B, D] embeddings to B*(1+m) rows: originals plus m copies each.

    Rows are ordered as the B originals followed by m blocks of B copies
    (block j holds copy j of every instance, at scales[j % len(scales)]).
    The expanded batch is row-normalized so every output row lies on the
    unit hypersphere. With ``with_cache=True`` also returns the cache for
    ``expand_backward``.
    """
    m = config.num_augments_per_instance
    if m > 0 and len(config.scales) == 0:
        raise ConfigError("num_augments_per_instance > 0 requires at least one jitter scale")
    labels = np.asarray(labels)
    b = z.shape[0]
    blocks = [z]
    for j in range(m):
        alpha = config.scales[j % len(config.scales)]
        blocks.append(jitter(z, alpha, rng))
    raw = np.concatenate(blocks, axis=0)
    normalized, norm_cache = layers.l2_normalize_rows(raw)
    batch = EmbeddingBatch(
        z=normalized,
        labels=np.tile(labels, 1 + m),
        is_augmented=np.repeat([False] + [True] * m, b),
        r=None,
    )
    if with_cache:
        return batch, (b, m, norm_cache)
    return batch


def expand_backward(grad_rows: np.ndarray, cache) -> np.ndarray:
    """Gradient of expand_batch w.r.t. its input embeddings.

    Backprops through the final row normalization, then sums the
    contributions of each instance's 1+m copies (the jitter noise is a
    constant, so each copy passes its gradient straight through).
    """
    b, m, norm_cache = cache
    g = layers.l2_normalize_rows_backward(grad_rows, norm_cache)
    return g.reshape(1 + m, b, -1).sum(axis=0)

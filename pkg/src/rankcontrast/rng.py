"""Seeded random number generation.

Everything stochastic in the library (weight init, batch shuffling,
embedding jitter, the SMO working-pair choice) flows through generators
created here so that a run is fully reproducible from its integer seeds.
Gaussian noise is produced by the Box-Muller transform on top of the
uniform stream rather than the generator's own normal() so the draw
discipline is explicit and stable.
"""

import numpy as np

_SEED_MASK = (1 << 64) - 1


def seeded_rng(seed: int) -> np.random.Generator:
    """Create a PCG64 generator from a 64-bit integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & _SEED_MASK))


def derive_seed(base_seed: int, index: int) -> int:
    """Per-call-site seed derivation rule: base_seed XOR index."""
    return (int(base_seed) ^ int(index)) & _SEED_MASK


def gaussian(rng: np.random.Generator, shape, dtype=np.float64) -> np.ndarray:
    """Standard normal samples via Box-Muller.

    Draws 2*ceil(n/2) uniforms per call regardless of parity so the
    stream position depends only on the requested shape.
    """
    n = int(np.prod(shape)) if len(shape) else 1
    half = (n + 1) // 2
    # random() yields [0, 1); flip to (0, 1] so log() is always finite
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.concatenate([radius * np.cos(theta), radius * np.sin(theta)])[:n]
    return out.reshape(shape).astype(dtype, copy=False)


def uniform(rng: np.random.Generator, low: float, high: float, shape, dtype=np.float64) -> np.ndarray:
    """Uniform samples in [low, high)."""
    return (low + (high - low) * rng.random(shape)).astype(dtype, copy=False)

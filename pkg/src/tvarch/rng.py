"""
Seeded random streams.

Every stream is a Philox4x64-10 counter-based generator (numpy's ``Philox``)
whose 128-bit key is the little-endian BLAKE2b-128 digest of the UTF-8 string
``"{seed}:{name}"``; the counter starts at zero.  Named streams used by the
simulators:

``z``
    innovations Z_1, ..., Z_N, in time order
``z-presample``
    innovations Z_0, Z_{-1}, ..., in *reverse* time order, so a longer
    burn-in only extends the pre-history further back

Innovations are produced with ``Generator.standard_normal`` (ziggurat),
``Generator.standard_t`` rescaled to unit variance, or ``Generator.random``
thresholded at 1/2 for the two-point law.

Replication seeds come from :func:`derive_seed`, the SplitMix64 finaliser
applied to ``base + (r + 1) * 0x9E3779B97F4A7C15 (mod 2**64)``.  For a fixed
base the map is injective in ``r`` because both steps are bijections.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def mix64(x: int) -> int:
    """SplitMix64 finaliser (a bijection on 64-bit integers)."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(base: int, replication: int) -> int:
    """Seed of replication ``replication`` of an experiment seeded with ``base``."""
    base = _check_seed(base)
    if replication < 0:
        raise ValueError("replication index must be non-negative")
    return mix64((base + (int(replication) + 1) * GOLDEN_GAMMA) & MASK64)


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for the named sub-stream of ``seed``."""
    seed = _check_seed(seed)
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=16).digest()
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=key))

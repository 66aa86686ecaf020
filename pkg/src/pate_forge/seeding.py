"""Stable seed derivation.

Every stochastic entity gets its own generator seeded from
``(master seed, kind, index)`` so results do not depend on execution order.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def derive_seed(master: int, kind: str, index: int = 0) -> int:
    """Return a 64-bit seed that is a stable hash of its arguments."""
    payload = f"{int(master) & SEED_MASK}|{kind}|{int(index)}".encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(master: int, kind: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, kind, index))

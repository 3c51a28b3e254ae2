import hashlib
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(value: int) -> int:
    """One splitmix64 finalisation step; a 64-bit bijection."""
    z = (value + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stable_hash(text: str) -> int:
    """64-bit hash of a string, identical across processes and platforms."""
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Xorshift64:
    """Marsaglia xorshift64 (13, 7, 17) seeded through splitmix64.

    Used for the BRIEF sampling pattern, which must regenerate bit-identically.
    """

    def __init__(self, seed: int):
        state = splitmix64(seed & MASK64)
        self.state = state or GOLDEN_GAMMA

    def next_u64(self) -> int:
        x = self.state
        x ^= (x << 13) & MASK64
        x ^= x >> 7
        x ^= (x << 17) & MASK64
        self.state = x
        return x

    def next_double(self) -> float:
        # 53 high bits -> [0, 1)
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def next_gaussian(self, sigma: float = 1.0) -> float:
        # Box-Muller, cosine branch only so every draw consumes exactly two words
        u1 = 1.0 - self.next_double()
        u2 = self.next_double()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def derive_seed(master_seed: int, sequence_id: str, rep: int, purpose: str) -> int:
    seed = splitmix64(master_seed & MASK64)
    for part in (stable_hash(sequence_id), rep & MASK64, stable_hash(purpose)):
        seed = splitmix64(seed ^ part)
    return seed


def derive_rng(master_seed: int, sequence_id: str, rep: int, purpose: str) -> np.random.Generator:
    """Independent random stream for one (sequence, repetition, purpose) unit.

    The stream depends only on its four inputs, never on how many other
    streams were created before it, so serial and parallel runs agree.
    """
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, sequence_id, rep, purpose)))

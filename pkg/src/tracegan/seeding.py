"""Seed fan-out and RNG construction.

Every stochastic stage gets its own 64-bit seed derived from the experiment's
root seed plus a stage tag, so stages can be re-run independently and two runs
with the same config agree bit for bit. The derivation is the first 8 bytes
(little-endian) of SHA-256 over ``"<root_seed>:<tag>"``. Streams are NumPy
Philox generators (counter-based Philox4x32-10) keyed by the derived seed.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(root_seed: int, tag: str) -> int:
    digest = hashlib.sha256(f"{root_seed & _MASK64}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def stage_rng(root_seed: int, tag: str) -> np.random.Generator:
    return make_rng(derive_seed(root_seed, tag))

"""Deterministic seed derivation.

One master seed drives every stochastic component (data generation, shuffle
order, parameter init, augmentation, probe). Component seeds are derived by
hashing a fixed label, so adding a new consumer never perturbs the streams
of existing ones.
"""

import hashlib

import numpy as np


def derive_seed(master_seed: int, label: str) -> int:
    """Map (master seed, component label) to an independent 64-bit seed."""
    digest = hashlib.sha256(f"{master_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def component_rng(master_seed: int, label: str) -> np.random.Generator:
    """Fresh generator for the stream identified by ``label``."""
    return np.random.default_rng(derive_seed(master_seed, label))

"""
Counter-based random streams.

Every path owns a Philox stream keyed by `(master seed, path index)`, so a path
is reproducible bit for bit no matter which worker draws it or in which order.
Normal variates come from `Generator.standard_normal`.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def path_stream(master_seed: int, path_index: int) -> np.random.Generator:
    """Returns the generator of one path.

    :param master_seed: Run-wide seed, reduced modulo 2**64.
    :type master_seed: int
    :param path_index: Index of the path inside the run.
    :type path_index: int
    :return: A fresh Philox-backed generator.
    :rtype: np.random.Generator
    """
    key = np.array([master_seed & _MASK64, path_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derived_seed(master_seed: int, label: str) -> int:
    """Seed of an independent sub-experiment, stable across runs and platforms."""
    digest = hashlib.sha256(f"{master_seed & _MASK64}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")

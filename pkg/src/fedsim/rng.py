"""Deterministic, purpose-keyed random streams.

Every stochastic choice in the simulator draws from its own generator,
keyed by (experiment seed, purpose tag, *indices). Two consequences:

* identical (seed, tag, indices) always yields the identical stream, so
  runs replay bit-for-bit;
* streams for different clients / rounds / steps are independent, so
  client work can be executed in any order (or in parallel) without
  changing results.
"""

import hashlib

import numpy as np

__all__ = ["substream"]


def _tag_entropy(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "big")


def substream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return the generator for stream (seed, tag, *indices).

    All indices must be non-negative integers.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    for i in indices:
        if i < 0:
            raise ValueError(f"stream indices must be non-negative, got {indices}")
    entropy = (int(seed), _tag_entropy(tag), *[int(i) for i in indices])
    return np.random.default_rng(np.random.SeedSequence(entropy))

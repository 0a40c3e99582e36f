"""Named, seedable, counter-based random streams.

Every source of randomness in the library draws from a Philox4x64-10
generator keyed by ``(seed, blake2b-64(label))``. Streams with distinct
labels are statistically independent, and the mapping from (seed, label)
to the byte stream is fixed, so initializations and batch schedules are
reproducible bit for bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, *labels: str) -> np.random.Generator:
    """Return the generator for ``(seed, labels...)``.

    Calling twice with the same arguments yields generators that produce
    identical streams.
    """
    tag = hashlib.blake2b("/".join(labels).encode("utf-8"), digest_size=8).digest()
    key = np.array(
        [seed & _MASK64, int.from_bytes(tag, "little")], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def uniform_init(seed: int, name: str, shape: tuple[int, ...], fan_in: int,
                 dtype=np.float32) -> np.ndarray:
    """Fan-in scaled uniform draw U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / float(fan_in) ** 0.5
    gen = stream(seed, "init", name)
    return gen.uniform(-bound, bound, size=shape).astype(dtype)

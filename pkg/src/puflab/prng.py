"""Keyed, order-independent random streams.

Every random quantity in the simulator is drawn from a stream that is a pure
function of a structured key ``(seed, role-tag, *indices)``.  The key is mixed
by :class:`numpy.random.SeedSequence` into the 128-bit key of a Philox4x64
counter-based generator.  Both algorithms are fixed by numpy's stability
guarantees for ``SeedSequence``/``Philox``, so outputs are reproducible across
runs and platforms and do not depend on the order in which streams are used.
"""
import zlib

import numpy as np

MASK64 = (1 << 64) - 1

# Role tags. Values are frozen: changing one changes every derived draw.
ROLE_MANUF = "manuf"
ROLE_TEMP = "temp"
ROLE_ROUTING = "routing"
ROLE_JITTER = "jitter"
ROLE_LAYOUT = "layout"
ROLE_CHALLENGE = "challenge"
ROLE_INIT = "init"


def _word(value):
    if isinstance(value, str):
        return zlib.crc32(value.encode("utf-8"))
    value = int(value)
    if value < 0:
        raise ValueError(f"key components must be non-negative, got {value}")
    return value


def key_words(*key):
    """Flatten a structured key into 32-bit words for ``SeedSequence``.

    Integers wider than 32 bits are split little-endian; strings are reduced
    with CRC-32.  A length word per component keeps ``(1, 23)`` and ``(12, 3)``
    apart.
    """
    words = []
    for part in key:
        value = _word(part)
        chunks = []
        while True:
            chunks.append(value & 0xFFFFFFFF)
            value >>= 32
            if not value:
                break
        words.append(len(chunks))
        words.extend(chunks)
    return words


def keyed_rng(*key):
    """Return a fresh ``numpy.random.Generator`` for the given key."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key_words(*key))))


def derive_seed(*key):
    """Derive a 64-bit integer seed from a structured key."""
    return int(np.random.SeedSequence(key_words(*key)).generate_state(1, np.uint64)[0])

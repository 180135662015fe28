"""Labeled sub-seed derivation.

Every random decision in a simulation draws from its own generator, seeded by
hashing the master seed together with a fixed role label (for example
``("round", 12, "sample")``).  Components therefore consume independent
streams: adding or removing one randomized step never shifts another step's
draws, which keeps paired runs comparable.
"""

import hashlib


def derive_seed(master: int, *labels) -> int:
    """Return a 64-bit seed derived from ``master`` and the given labels."""
    payload = str(int(master)).encode()
    for part in labels:
        payload += b"|" + str(part).encode()
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")

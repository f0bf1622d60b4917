"""Deterministic random-stream derivation.

Every stochastic piece of the simulator draws from a generator derived by
hashing a (seed, label...) tuple, so results are bit-identical across runs
and platforms and independent streams never share state.
"""

import hashlib
import random


def derive_rng(*parts) -> random.Random:
    """Random generator keyed by the given parts (seed, names, tick...)."""
    key = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))

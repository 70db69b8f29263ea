"""Named, reproducible random streams derived from one master seed.

Each stream is keyed by a string name so that adding or removing consumers
of one stream (e.g. more devices) never perturbs the draws of another
(e.g. event placement).
"""

import hashlib

import numpy as np


def _name_entropy(name: str) -> int:
    # sha256 keeps the name -> seed mapping stable across platforms and runs
    # (the built-in hash() is salted per process).
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:16], "big")


def stream(master_seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (master_seed, name)."""
    seq = np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF, _name_entropy(name)])
    return np.random.default_rng(seq)


def substream_seed(master_seed: int, name: str) -> int:
    """Derive a 64-bit child seed, for code that needs a seed rather than a stream."""
    seq = np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF, _name_entropy(name)])
    return int(seq.generate_state(1, np.uint64)[0])

"""Deterministic sub-seed derivation.

All randomness in a run flows from one base seed. Stages, trials, and
per-model Monte Carlo draws derive their own streams by hashing the base
seed together with string/integer labels, so adding a stage never perturbs
the draws of another.
"""

import hashlib


def derive_seed(seed: int, *labels) -> int:
    """Derive a 63-bit sub-seed from ``seed`` and a label path."""
    text = str(int(seed)) + "".join(f"|{part}" for part in labels)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1

"""Deterministic seed derivation.

All randomness in a run flows from one master seed through named
sub-streams so that scenario generation, GA decisions, and individual
simulations can be re-seeded independently and reproduced bit-for-bit.
Python's ``hash()`` is salted per process, so streams are derived from a
SHA-256 digest of the canonical textual form of the parts instead.
"""

import hashlib
import random

__all__ = ["derive_seed", "derive_rng"]


def derive_seed(*parts) -> int:
    """Map an arbitrary tuple of hashable-by-repr parts to a 64-bit seed."""
    text = "\x1f".join(_canon(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(*parts) -> random.Random:
    """A `random.Random` seeded from `derive_seed(*parts)`."""
    return random.Random(derive_seed(*parts))


def _canon(part) -> str:
    # repr() of ints/floats/strings is stable across platforms; floats use
    # shortest round-trip formatting.
    if isinstance(part, float):
        return repr(part)
    if isinstance(part, (int, str)):
        return f"{type(part).__name__}:{part}"
    if isinstance(part, (tuple, list)):
        return "(" + ",".join(_canon(p) for p in part) + ")"
    raise TypeError(f"cannot derive a seed from {type(part).__name__}")

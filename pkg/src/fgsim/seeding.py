"""Deterministic seed derivation.

All randomness in the simulator flows from explicit integer seeds.  Two
helpers cover the two situations that come up:

* ``mix`` — fast integer-only mixing for inner loops (per-node, per-layer,
  per-epoch sample streams).
* ``derive_seed`` — string-tagged derivation for run-level seeds
  (master seed x variant x run index x client index), stable across
  platforms and Python versions.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix(*parts: int) -> int:
    """Mix integers into a well-distributed 63-bit seed."""
    acc = 0x1234567811223344
    for p in parts:
        acc = _splitmix64(acc ^ (p & _MASK64))
    return acc >> 1


def derive_seed(master: int, *tags: int | str) -> int:
    """Derive a child seed from a master seed and a tag path.

    Uses SHA-256 over a canonical encoding, so the same (master, tags)
    always yields the same 63-bit seed regardless of platform.
    """
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1

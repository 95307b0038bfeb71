"""Deterministic, counter-based Gaussian draws.

Every stochastic draw in the package comes from a numpy Philox generator whose
128-bit key is derived from a short context string::

    key = int.from_bytes(sha256(b"seed|domain|block|t|purpose")[:16], "little")

The same context always yields the same stream regardless of process, thread,
or call order, which is what makes parallel and serial runs bit-identical.
Draws are produced in float64; callers cast to their working dtype.

``derive_seed`` folds (run seed, domain tag, block index) into a single
63-bit integer so per-block seeds can be listed in run manifests and fed back
into :func:`gaussian_field` via its ``seed`` argument.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["philox_key", "generator", "gaussian_field", "derive_seed"]


def _context_bytes(seed, domain, block, t, purpose) -> bytes:
    return f"{seed}|{domain}|{block}|{t}|{purpose}".encode("utf-8")


def philox_key(seed: int, domain: str = "", block: int = 0, t: int = 0,
               purpose: str = "") -> int:
    """128-bit Philox key for the given draw context."""
    digest = hashlib.sha256(_context_bytes(seed, domain, block, t, purpose)).digest()
    return int.from_bytes(digest[:16], "little")


def generator(seed: int, domain: str = "", block: int = 0, t: int = 0,
              purpose: str = "") -> np.random.Generator:
    """A fresh Philox generator keyed by the draw context."""
    return np.random.Generator(np.random.Philox(key=philox_key(seed, domain, block, t, purpose)))


def gaussian_field(shape, seed: int, domain: str = "", block: int = 0, t: int = 0,
                   purpose: str = "") -> np.ndarray:
    """Standard-normal field (float64) fully determined by the draw context."""
    return generator(seed, domain, block, t, purpose).standard_normal(shape)


def derive_seed(seed: int, domain: str, block: int) -> int:
    """Per-block 63-bit seed derived from (run seed, domain tag, block index)."""
    digest = hashlib.sha256(_context_bytes(seed, domain, block, 0, "seed")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)

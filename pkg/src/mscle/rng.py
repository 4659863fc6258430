"""Reproducible random streams for data generation, pilots, and draws.

Every stochastic step gets its own generator derived from
``(master_seed, *key)`` so that, e.g., the pilot draw of replication 17
never shares a stream with the subsample draw of replication 17 or with
any step of replication 18.  Keys may mix integers and short strings;
strings are mapped to stable 32-bit values with CRC32 (Python's ``hash``
is salted per process and must not be used here).
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "key_label"]


def _key_part(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def substream(master_seed: int, *key: int | str) -> np.random.Generator:
    """Return a generator for the stream identified by ``(master_seed, *key)``.

    The mapping is deterministic across processes and platforms, so parallel
    workers can derive their own streams without any coordination.
    """
    spawn_key = tuple(_key_part(p) for p in key)
    seq = np.random.SeedSequence(int(master_seed), spawn_key=spawn_key)
    return np.random.default_rng(seq)


def key_label(master_seed: int, *key: int | str) -> str:
    """Human-readable record of a stream key, for audit output."""
    parts = "/".join(str(p) for p in key)
    return f"{master_seed}/{parts}" if parts else str(master_seed)

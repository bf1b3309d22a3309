"""Seed handling shared by every sampler.

All randomness flows from :class:`numpy.random.SeedSequence`.  Independent
sub-streams are addressed by appending integers to the spawn key, so a
stream is a pure function of ``(entropy, path)`` and never depends on the
order in which other streams were created.
"""

from __future__ import annotations

import struct

import numpy as np


def as_seed_sequence(stream) -> np.random.SeedSequence:
    """Accept an int, a SeedSequence or a Generator built from one."""
    if isinstance(stream, np.random.SeedSequence):
        return stream
    if isinstance(stream, np.random.Generator):
        seq = stream.bit_generator.seed_seq
        if isinstance(seq, np.random.SeedSequence):
            return seq
        raise TypeError("generator is not backed by a SeedSequence")
    if isinstance(stream, (int, np.integer)):
        return np.random.SeedSequence(int(stream))
    raise TypeError(f"cannot derive a seed sequence from {type(stream).__name__}")


def child_sequence(seq: np.random.SeedSequence, *path: int) -> np.random.SeedSequence:
    """The sub-stream at ``path`` below ``seq``."""
    return np.random.SeedSequence(seq.entropy, spawn_key=tuple(seq.spawn_key) + tuple(int(p) for p in path))


def generator(seq) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(as_seed_sequence(seq)))


def float_key(x: float) -> int:
    """The IEEE-754 bit pattern of ``x``, used to key streams by real parameters."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def signed_key(n: int) -> int:
    """Zigzag map of an integer onto the nonnegatives (spawn keys must be >= 0)."""
    n = int(n)
    return 2 * n if n >= 0 else -2 * n - 1

"""Counter-based RNG streams.

Every stream is a ``SeedSequence`` addressed by an explicit key, so the
numbers a cell of work sees never depend on what ran before it or on how
many workers share the run.
"""

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence]


def as_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(int(seed))


def child_sequence(parent: SeedLike, *keys: int) -> np.random.SeedSequence:
    """Derive the stream at ``keys`` below ``parent`` without mutating it"""
    parent = as_sequence(parent)
    return np.random.SeedSequence(
        entropy=parent.entropy,
        spawn_key=tuple(parent.spawn_key) + tuple(int(k) for k in keys),
        pool_size=parent.pool_size,
    )


def generator(seed: SeedLike, *keys: int) -> np.random.Generator:
    return np.random.default_rng(child_sequence(seed, *keys))


def seed_stream(master_seed: int, generation: int, individual: int, level: int) -> np.random.Generator:
    """Stream for one generated level of one individual in one generation"""
    for value in (master_seed, generation, individual, level):
        if value < 0:
            raise ValueError(f"seed_stream indices must be non-negative, got {value}")
    return generator(master_seed, generation, individual, level)


def evaluation_sequence(master_seed: int, generation: int, individual: int) -> np.random.SeedSequence:
    """Parent of the per-level streams of ``seed_stream``"""
    return child_sequence(master_seed, generation, individual)


def stream_fingerprint(rng: np.random.Generator, n: int = 4) -> Sequence[int]:
    """First raw draws of a stream, used to compare streams cheaply"""
    return tuple(int(x) for x in rng.bit_generator.random_raw(n))

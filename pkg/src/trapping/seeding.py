"""Deterministic per-replica random streams.

Every replica gets its own ``numpy.random.Generator`` keyed by
``(master_seed, *key)`` through ``SeedSequence.spawn_key``, so results do not
depend on the order (or process) in which replicas are executed.
"""
from __future__ import annotations

import numpy as np


def check_seed(master_seed) -> int:
    if master_seed is None:
        raise ValueError("master_seed is required; seeds never default")
    seed = int(master_seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {master_seed}")
    return seed


def replica_rng(master_seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=check_seed(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class UniformStream:
    """Buffered scalar uniforms drawn from a Generator in fixed-size blocks.

    All samplers in the package consume exactly one uniform per categorical
    draw, so two samplers fed by equal streams see identical uniforms.
    """

    __slots__ = ("_rng", "_block", "_buf", "_pos")

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._buf = []
        self._pos = 0

    def next(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

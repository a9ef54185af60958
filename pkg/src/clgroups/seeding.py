"""Deterministic, counter-based random streams.

Stream (master, index) is numpy's Philox4x64 keyed by the 128-bit pair
(master, index). Different indices give disjoint counter spaces under
different keys, so streams never overlap and need no coordination.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def seed_stream(master_seed: int, task_index: int) -> np.random.Generator:
    key = np.array([int(master_seed) & _MASK64, int(task_index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def kernel_seed(master_seed: int, task_index: int) -> int:
    """A 31-bit seed for compiled kernels, drawn from the (master, index) stream."""
    return int(seed_stream(master_seed, task_index).integers(1, 2**31 - 1))

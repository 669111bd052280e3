"""Deterministic random streams keyed by (seed, task name, index)."""

import zlib

import numpy as np


def task_tag(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, task: str, index: int = 0) -> np.random.Generator:
    """A counter-based generator that depends only on its key, never on scheduling."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, task_tag(task), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def sub_seed(seed: int, task: str, index: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, task_tag(task), int(index)]).generate_state(1)[0])

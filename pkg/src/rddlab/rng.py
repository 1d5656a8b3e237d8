"""Seeded random streams.

Every component owns its own generator; nothing touches numpy's global state.
Philox is counter based, so a stream is fully described by (seed, counter)
and can be snapshotted and resumed exactly.
"""

from __future__ import annotations

import copy

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


def derive_seed(seed: int, *tags: int | str) -> int:
    """Deterministically derive an independent child seed from ``seed`` and tags."""
    entropy = [int(seed) & SEED_MASK]
    for tag in tags:
        if isinstance(tag, str):
            entropy.extend(tag.encode())
        else:
            entropy.append(int(tag) & SEED_MASK)
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_state(rng: np.random.Generator) -> dict:
    return _jsonable(copy.deepcopy(rng.bit_generator.state))


def set_rng_state(rng: np.random.Generator, state: dict) -> None:
    state = copy.deepcopy(state)
    inner = state["state"]
    inner["counter"] = np.asarray(inner["counter"], dtype=np.uint64)
    inner["key"] = np.asarray(inner["key"], dtype=np.uint64)
    state["buffer"] = np.asarray(state["buffer"], dtype=np.uint64)
    rng.bit_generator.state = state


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [int(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    return obj

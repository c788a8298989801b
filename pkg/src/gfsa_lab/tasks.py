"""Deterministic synthetic sequence tasks with per-position targets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Rng

DEFAULT_SIZE = 128


@dataclass(frozen=True)
class TaskSpec:
    name: str
    vocab: int
    seq_len: int
    inputs: np.ndarray
    targets: np.ndarray
    seed: int

    def __len__(self):
        return self.inputs.shape[0]


def copy_targets(inputs: np.ndarray) -> np.ndarray:
    """Copy task labels: position i predicts the token at position i-1 (cyclic)."""
    return np.roll(inputs, 1, axis=-1)


def majority_targets(inputs: np.ndarray, vocab: int) -> np.ndarray:
    """Every position predicts the sequence's most frequent token (lowest id on ties)."""
    counts = np.zeros((inputs.shape[0], vocab), dtype=np.int64)
    np.add.at(counts, (np.arange(inputs.shape[0])[:, None], inputs), 1)
    winner = counts.argmax(axis=1)
    return np.repeat(winner[:, None], inputs.shape[1], axis=1)


def _sample(vocab: int, n: int, size: int, seed: int) -> np.ndarray:
    if vocab < 2 or n < 1 or size < 1:
        raise ValueError(f"invalid task shape vocab={vocab} n={n} size={size}")
    return Rng(seed).integers(vocab, (size, n))


def make_copy_task(vocab: int, n: int, size: int = DEFAULT_SIZE, seed: int = 0) -> TaskSpec:
    x = _sample(vocab, n, size, seed)
    return TaskSpec("copy", vocab, n, x, copy_targets(x), seed)


def make_majority_task(vocab: int, n: int, size: int = DEFAULT_SIZE, seed: int = 0) -> TaskSpec:
    x = _sample(vocab, n, size, seed)
    return TaskSpec("majority", vocab, n, x, majority_targets(x, vocab), seed)


TASKS = {"copy": make_copy_task, "majority": make_majority_task}


def make_task(name: str, vocab: int, n: int, size: int = DEFAULT_SIZE, seed: int = 0) -> TaskSpec:
    try:
        factory = TASKS[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None
    return factory(vocab, n, size=size, seed=seed)

"""Row-stochastic self-attention matrices and the baseline attention output."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import ShapeError, as_matrix, matmul, softmax_rows

CONSTRUCTION_TOL = 1e-9
INPUT_TOL = 1e-6


@dataclass(frozen=True)
class AttentionMatrix:
    """An n x n matrix with entries in [0, 1] and rows summing to 1.

    With ``masked=True`` rows may sum to less than 1.  ``tol`` is the slack
    allowed on both checks; matrices read from files use ``INPUT_TOL``.
    """

    m: np.ndarray
    masked: bool = False
    tol: float = CONSTRUCTION_TOL

    def __post_init__(self):
        m = as_matrix(self.m, "attention matrix")
        if m.shape[0] != m.shape[1]:
            raise ShapeError(f"attention matrix must be square, got {m.shape}")
        tol = self.tol
        if m.size and (m.min() < -tol or m.max() > 1 + tol):
            raise ValueError("attention entries must lie in [0, 1]")
        sums = m.sum(axis=1)
        if self.masked:
            if np.any(sums > 1 + tol):
                raise ValueError(f"masked attention row sums exceed 1 (max {sums.max()!r})")
        elif np.any(np.abs(sums - 1) > tol):
            worst = int(np.argmax(np.abs(sums - 1)))
            raise ValueError(f"attention row {worst} sums to {sums[worst]!r}, not 1")
        object.__setattr__(self, "m", m)

    @classmethod
    def from_input(cls, m, masked: bool = False) -> "AttentionMatrix":
        return cls(m, masked=masked, tol=INPUT_TOL)

    @property
    def n(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True)
class HeadLayout:
    heads: int
    model_dim: int

    def __post_init__(self):
        if self.heads < 1 or self.model_dim < 1 or self.model_dim % self.heads:
            raise ValueError(f"{self.heads} heads do not divide model_dim {self.model_dim}")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


def causal_mask(n: int) -> np.ndarray:
    """Boolean mask where ``True`` marks a visible (key <= query) position."""
    return np.tril(np.ones((n, n), dtype=bool))


def attention_scores(x, w_qry, w_key, mask: Optional[np.ndarray] = None) -> AttentionMatrix:
    """softmax((X W_qry)(X W_key)^T / sqrt(d)).

    ``mask`` is boolean n x n with ``True`` on visible positions; hidden
    positions get -inf before the softmax and are exactly zero afterwards.
    """
    x = as_matrix(x, "x")
    n, d = x.shape
    if d < 1:
        raise ShapeError("model dimension must be at least 1")
    for name, w in (("w_qry", w_qry), ("w_key", w_key)):
        if np.shape(w) != (d, d):
            raise ShapeError(f"{name} must be {d}x{d}, got {np.shape(w)}")
    scores = matmul(matmul(x, w_qry), matmul(x, w_key).T) / math.sqrt(d)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (n, n):
            raise ShapeError(f"mask must be {n}x{n}, got {mask.shape}")
        empty = np.flatnonzero(~mask.any(axis=1))
        if empty.size:
            raise ValueError(f"row {empty[0]} is fully masked; softmax undefined")
        scores = np.where(mask, scores, -np.inf)
    return AttentionMatrix(softmax_rows(scores), masked=mask is not None)


def apply_sa(x, a: AttentionMatrix, w_val) -> np.ndarray:
    """Baseline self-attention output A X W_val."""
    x = np.asarray(x, dtype=np.float64)
    if a.n != x.shape[0]:
        raise ShapeError(f"attention is {a.n}x{a.n} but x has {x.shape[0]} rows")
    return matmul(matmul(a.m, x), np.asarray(w_val, dtype=np.float64))


def split_heads(x, layout: HeadLayout) -> list[np.ndarray]:
    """Contiguous column blocks: head i owns columns [i*dh, (i+1)*dh)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != layout.model_dim:
        raise ShapeError(f"x has shape {x.shape}, layout expects {layout.model_dim} columns")
    dh = layout.head_dim
    return [x[:, i * dh:(i + 1) * dh].copy() for i in range(layout.heads)]


def merge_heads(parts: list[np.ndarray]) -> np.ndarray:
    if not parts:
        raise ValueError("no heads to merge")
    return np.concatenate(parts, axis=1)

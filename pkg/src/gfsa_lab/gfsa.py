"""Graph filter self-attention: the three-term matrix polynomial filter.

    H = w0 I + w1 A + wK (A + (K-1)(A^2 - A))

The last term stands in for A^K.  Its error against the true power,
measured in the induced infinity norm, never exceeds 2K for row-stochastic
(or row-substochastic) A; :func:`error_ek` measures it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .attention import AttentionMatrix
from .numerics import ShapeError, inf_norm, matmul

BOUND_SLACK = 1e-9


class BoundViolation(ArithmeticError):
    """Measured Taylor error exceeds 2K: the input was not (sub)stochastic."""


@dataclass
class GraphFilter:
    """Per-head coefficients ``w0``, ``w1``, ``wk`` and a shared order K.

    The default initialization (0, 1, 0) makes the filter equal to the
    attention matrix itself.
    """

    w0: np.ndarray
    w1: np.ndarray
    wk: np.ndarray
    order_k: int

    def __post_init__(self):
        self.w0 = np.atleast_1d(np.asarray(self.w0, dtype=np.float64))
        self.w1 = np.atleast_1d(np.asarray(self.w1, dtype=np.float64))
        self.wk = np.atleast_1d(np.asarray(self.wk, dtype=np.float64))
        if not (self.w0.shape == self.w1.shape == self.wk.shape) or self.w0.ndim != 1:
            raise ShapeError("w0, w1, wk must be 1-D with one entry per head")
        if int(self.order_k) != self.order_k or self.order_k < 1:
            raise ValueError(f"filter order K must be an integer >= 1, got {self.order_k}")
        self.order_k = int(self.order_k)
        for name in ("w0", "w1", "wk"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def initial(cls, heads: int, order_k: int) -> "GraphFilter":
        return cls(np.zeros(heads), np.ones(heads), np.zeros(heads), order_k)

    @classmethod
    def single(cls, w0: float, w1: float, wk: float, order_k: int) -> "GraphFilter":
        return cls([w0], [w1], [wk], order_k)

    @property
    def heads(self) -> int:
        return self.w0.shape[0]

    def coefficients(self, head: int) -> tuple[float, float, float]:
        if not 0 <= head < self.heads:
            raise IndexError(f"head {head} out of range for {self.heads} heads")
        return float(self.w0[head]), float(self.w1[head]), float(self.wk[head])


@dataclass(frozen=True)
class ErrorBoundRecord:
    k: int
    actual_error: float
    bound: float


def _check_order(k) -> int:
    if int(k) != k or k < 1:
        raise ValueError(f"order K must be an integer >= 1, got {k}")
    return int(k)


def exact_power(a: AttentionMatrix, k: int) -> np.ndarray:
    """A^k by left-to-right repeated multiplication."""
    k = _check_order(k)
    p = a.m.copy()
    for _ in range(k - 1):
        p = matmul(p, a.m)
    return p


def taylor_from(a: np.ndarray, a2: np.ndarray, k: int) -> np.ndarray:
    """First-order expansion of A^K around K=1 with the difference A^2 - A as slope."""
    return a + (k - 1) * (a2 - a)


def taylor_power(a: AttentionMatrix, k: int) -> np.ndarray:
    k = _check_order(k)
    return taylor_from(a.m, matmul(a.m, a.m), k)


def _record(k: int, actual: float) -> ErrorBoundRecord:
    bound = 2.0 * k
    if actual > bound + BOUND_SLACK:
        raise BoundViolation(f"E_K = {actual!r} exceeds 2K = {bound} for K = {k}")
    return ErrorBoundRecord(k=k, actual_error=actual, bound=bound)


def error_ek(a: AttentionMatrix, k: int) -> ErrorBoundRecord:
    """Infinity-norm distance between A^K and its first-order approximation."""
    k = _check_order(k)
    return _record(k, inf_norm(exact_power(a, k) - taylor_power(a, k)))


def error_profile(a: AttentionMatrix, ks: Iterable[int]) -> list[ErrorBoundRecord]:
    """:func:`error_ek` for several K, sharing the power chain.

    Powers are accumulated left to right exactly as in :func:`exact_power`,
    so each record is bit-identical to the single-K call.
    """
    ks = sorted({_check_order(k) for k in ks})
    if not ks:
        return []
    a2 = matmul(a.m, a.m)
    power = a.m.copy()
    have = 1
    out = []
    for k in ks:
        while have < k:
            power = matmul(power, a.m)
            have += 1
        out.append(_record(k, inf_norm(power - taylor_from(a.m, a2, k))))
    return out


def filter_matrix(a: np.ndarray, w0: float, w1: float, wk: float, k: int,
                  a2: Optional[np.ndarray] = None) -> np.ndarray:
    """The filter polynomial on an arbitrary square matrix."""
    if a2 is None:
        a2 = matmul(a, a)
    high = taylor_from(a, a2, k)
    return w0 * np.eye(a.shape[0]) + w1 * a + wk * high


def build_filter(a: AttentionMatrix, f: GraphFilter, head: int = 0,
                 a_squared: Optional[np.ndarray] = None) -> np.ndarray:
    """H for one head.  Pass ``a_squared`` to reuse a precomputed A^2."""
    w0, w1, wk = f.coefficients(head)
    return filter_matrix(a.m, w0, w1, wk, f.order_k, a_squared)


def apply_gfsa(x, a: AttentionMatrix, f: GraphFilter, head: int, w_val) -> np.ndarray:
    """H X W_val; identical to :func:`apply_sa` when the filter is (0, 1, 0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != a.n:
        raise ShapeError(f"filter is {a.n}x{a.n} but x has {x.shape[0]} rows")
    h = build_filter(a, f, head)
    return matmul(matmul(h, x), np.asarray(w_val, dtype=np.float64))

"""Spectral and oversmoothing diagnostics.

The filter response of a graph filter is its polynomial evaluated on the
singular values of the attention matrix,

    r(s) = w0 + w1 s + wK (s + (K-1)(s^2 - s)),

with singular values listed in ascending order (low to high "frequency"
index).  This is this package's own definition of the response curve; it
is comparable in shape, not in axis units, to published visualizations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionMatrix
from .gfsa import GraphFilter, build_filter
from .numerics import format_csv, svd


_OVERFLOW_LIMIT = 1e150


@dataclass(frozen=True)
class SpectralReport:
    sigma: np.ndarray
    response: np.ndarray
    layer_index: int = 0
    head_index: int = 0

    def __post_init__(self):
        if len(self.sigma) != len(self.response):
            raise ValueError("sigma and response lengths differ")

    def to_csv(self) -> str:
        return format_csv(["sigma", "response"], zip(self.sigma, self.response))


@dataclass(frozen=True)
class SimilarityTrace:
    per_layer: list = field(default_factory=list)

    def to_csv(self) -> str:
        return format_csv(["step", "cosine_similarity"], enumerate(self.per_layer))


def response_polynomial(sigma, w0: float, w1: float, wk: float, k: int) -> np.ndarray:
    s = np.asarray(sigma, dtype=np.float64)
    return w0 + w1 * s + wk * (s + (k - 1) * (s * s - s))


def filter_response(f: GraphFilter, head: int, sigma, layer_index: int = 0) -> SpectralReport:
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0) or np.any(np.diff(sigma) < 0):
        raise ValueError("sigma must be non-negative and ascending")
    w0, w1, wk = f.coefficients(head)
    return SpectralReport(sigma=sigma.copy(),
                          response=response_polynomial(sigma, w0, w1, wk, f.order_k),
                          layer_index=layer_index, head_index=head)


def attention_spectrum(a: AttentionMatrix) -> np.ndarray:
    return svd(a.m).sigma


def feature_spectrum(x) -> np.ndarray:
    return svd(x).sigma


def mean_cosine_similarity(x) -> float:
    """Mean of cos(x_i, x_j) over ordered pairs i != j.

    Pairs involving a zero row count as 0.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("cosine similarity needs at least two rows")
    norms = np.linalg.norm(x, axis=1)
    unit = np.divide(x, norms[:, None], out=np.zeros_like(x), where=norms[:, None] > 0)
    gram = unit @ unit.T
    total = gram.sum() - np.trace(gram)
    return float(np.clip(total / (n * (n - 1)), -1.0, 1.0))


def propagate_trace(x0, a: AttentionMatrix, f: GraphFilter, steps: int,
                    head: int = 0) -> SimilarityTrace:
    """Similarity of H^m x0 for m = 0..steps, with a single fixed filter H."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    h = build_filter(a, f, head)
    x = np.asarray(x0, dtype=np.float64)
    trace = [mean_cosine_similarity(x)]
    for m in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            x = h @ x
        # squared norms overflow well before the entries do
        if not np.all(np.abs(x) <= _OVERFLOW_LIMIT):
            w0, w1, wk = f.coefficients(head)
            raise OverflowError(
                f"features overflowed at step {m}; coefficient sum "
                f"{w0 + w1 + wk!r} has magnitude above 1, rescale the coefficients")
        trace.append(mean_cosine_similarity(x))
    return SimilarityTrace(per_layer=trace)


def batch_mean_cosine_similarity(x) -> np.ndarray:
    """:func:`mean_cosine_similarity` for each item of a (batch, n, d) stack."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[1]
    if n < 2:
        raise ValueError("cosine similarity needs at least two rows")
    norms = np.linalg.norm(x, axis=2, keepdims=True)
    unit = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    gram = unit @ np.swapaxes(unit, 1, 2)
    total = gram.sum(axis=(1, 2)) - np.trace(gram, axis1=1, axis2=2)
    return np.clip(total / (n * (n - 1)), -1.0, 1.0)

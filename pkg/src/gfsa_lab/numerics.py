"""Dense linear algebra substrate.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and shape
``(rows, cols)``.  Every public function returns a freshly allocated array
and never mutates its arguments.

The singular value decomposition is a one-sided (Hestenes) Jacobi method.
Its rotation sweeps run in a compiled Cython kernel when one is built, and
in an equivalent numpy loop otherwise; set ``GFSA_LAB_PURE_PYTHON=1`` to
force the fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from . import _jacobi

try:
    from . import _jacobi_ext
except ImportError:  # extension not built
    _jacobi_ext = None

SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 60
MAX_SVD_DIM = 4096

_KERNELS = {"python": _jacobi.jacobi_sweeps}
if _jacobi_ext is not None:
    _KERNELS["cython"] = _jacobi_ext.jacobi_sweeps

if os.environ.get("GFSA_LAB_PURE_PYTHON") == "1" or _jacobi_ext is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def available_backends() -> list[str]:
    return sorted(_KERNELS)


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class SvdConvergenceError(RuntimeError):
    def __init__(self, sweeps: int):
        super().__init__(f"Jacobi SVD did not converge after {sweeps} sweeps")
        self.sweeps = sweeps


class MatrixFormatError(ValueError):
    def __init__(self, message: str, line: int, source: str = "<text>"):
        super().__init__(f"{source}: line {line}: {message}")
        self.message = message
        self.line = line


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Copy ``data`` into a finite float64 2-D array."""
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction.

    Entries equal to ``-inf`` are treated as masked and come out as exact
    zeros.  A row with no finite entry has no defined softmax.
    """
    m = np.asarray(m, dtype=np.float64)
    row_max = m.max(axis=-1, keepdims=True)
    if not np.all(np.isfinite(row_max)):
        raise ValueError("softmax undefined for a row with no finite entries")
    e = np.exp(m - row_max)
    return e / e.sum(axis=-1, keepdims=True)


def inf_norm(m: np.ndarray) -> float:
    """Induced infinity norm: maximum absolute row sum."""
    return float(np.abs(m).sum(axis=1).max())


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD with singular values in ascending order.

    ``u`` is rows x k, ``sigma`` has length k, ``vt`` is k x cols, where
    k = min(rows, cols), and ``u @ diag(sigma) @ vt`` reconstructs the input.
    """

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.vt


def _complete_columns(u: np.ndarray, missing: np.ndarray) -> None:
    # Fill unit-less columns with an orthonormal completion (Gram-Schmidt on e_i).
    m = u.shape[0]
    basis = [u[:, j] for j in range(u.shape[1]) if not missing[j]]
    candidates = iter(np.eye(m))
    for j in np.flatnonzero(missing):
        for e in candidates:
            v = e.copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                u[:, j] = v / norm
                basis.append(u[:, j])
                break


def svd(m: np.ndarray, *, backend: str | None = None) -> SvdResult:
    """One-sided Jacobi SVD.

    Sweeps stop once every column pair satisfies
    ``|<c_p, c_q>| <= 1e-12 * |c_p| |c_q|``; more than 60 sweeps raises
    :class:`SvdConvergenceError`.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if max(rows, cols) > MAX_SVD_DIM:
        raise ShapeError(f"svd supports matrices up to {MAX_SVD_DIM} per side, got {m.shape}")
    if rows < cols:
        r = svd(m.T, backend=backend)
        return SvdResult(u=r.vt.T.copy(), sigma=r.sigma, vt=r.u.T.copy(), sweeps=r.sweeps)

    kernel = _KERNELS[backend or BACKEND]
    work = np.ascontiguousarray(m.T)
    vt = np.eye(cols)
    # columns this small are cancellation residue, i.e. numerically zero
    negligible = rows * (np.finfo(np.float64).eps * np.linalg.norm(m)) ** 2
    sweeps = kernel(work, vt, SVD_TOL, negligible, SVD_MAX_SWEEPS)
    if sweeps < 0:
        raise SvdConvergenceError(SVD_MAX_SWEEPS)

    sq = np.einsum("ij,ij->i", work, work)
    sigma = np.where(sq > negligible, np.sqrt(sq), 0.0)
    u = np.zeros((rows, cols))
    nonzero = sigma > 0.0
    u[:, nonzero] = (work[nonzero] / sigma[nonzero, None]).T
    if not nonzero.all():
        _complete_columns(u, ~nonzero)

    order = np.argsort(sigma, kind="stable")
    return SvdResult(u=u[:, order], sigma=sigma[order], vt=vt[order], sweeps=sweeps)


class Rng:
    """Seeded random source backed by numpy's PCG64 generator.

    PCG64 (O'Neill's permuted congruential generator, 128-bit state, XSL-RR
    output) is seeded through ``numpy.random.SeedSequence(seed)``.  Its bit
    stream is platform independent; uniforms use the 53-bit conversion.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self._gen.random(shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return scale * self._gen.standard_normal(shape)

    def integers(self, high: int, shape) -> np.ndarray:
        return self._gen.integers(0, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def row_stochastic(self, n: int) -> np.ndarray:
        """i.i.d. uniform(0, 1) entries, each row divided by its sum."""
        a = self.uniform((n, n))
        return a / a.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# Matrix text format: "<rows> <cols>" header, then one line per row.

def format_float(x: float) -> str:
    return format(float(x), ".17g")


def format_matrix(m: np.ndarray) -> str:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines.extend(" ".join(format_float(v) for v in row) for row in m)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise MatrixFormatError("missing '<rows> <cols>' header", 1)
    header = lines[0].split()
    try:
        rows, cols = (int(t) for t in header)
    except ValueError:
        raise MatrixFormatError(f"bad header {lines[0]!r}", 1) from None
    if rows < 0 or cols < 0:
        raise MatrixFormatError(f"bad header {lines[0]!r}", 1)
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != rows:
        raise MatrixFormatError(f"expected {rows} rows, found {len(body)}", len(body) + 1)
    out = np.empty((rows, cols))
    for i, line in enumerate(body):
        tokens = line.split()
        if len(tokens) != cols:
            raise MatrixFormatError(f"expected {cols} values, found {len(tokens)}", i + 2)
        try:
            out[i] = [float(t) for t in tokens]
        except ValueError as exc:
            raise MatrixFormatError(str(exc), i + 2) from None
    if not np.all(np.isfinite(out)):
        raise MatrixFormatError("non-finite value", 2 + int(np.flatnonzero(~np.isfinite(out).all(axis=1))[0]))
    return out


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"matrix file not found: {path}")
    try:
        return parse_matrix(path.read_text())
    except MatrixFormatError as exc:
        raise MatrixFormatError(exc.message, exc.line, str(path)) from None


def write_matrix(path: Union[str, Path], m: np.ndarray) -> None:
    Path(path).write_text(format_matrix(m), newline="\n")


def format_csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    """CSV text with 17-significant-digit floats and '\\n' line endings."""
    def cell(v):
        if isinstance(v, (float, np.floating)):
            return format_float(v)
        return str(v)

    out = [",".join(header)]
    out.extend(",".join(cell(v) for v in row) for row in rows)
    return "\n".join(out) + "\n"

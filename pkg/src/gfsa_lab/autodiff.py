"""A small tape-based reverse-mode differentiation engine over numpy arrays.

Each op computes its value eagerly and appends one record to the tape:
the output tensor, its inputs, and a closure mapping the output gradient to
input gradients.  :func:`backward` walks the records once, newest first.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np


class GradientError(FloatingPointError):
    """A non-finite gradient reached a named parameter."""


class Tensor:
    __slots__ = ("value", "tape", "name")
    __array_ufunc__ = None  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value: np.ndarray, tape: "Tape", name: Optional[str] = None):
        self.value = value
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} shape={self.value.shape}>"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)


Backward = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    def __init__(self):
        self.records: list[tuple[Tensor, tuple, Backward]] = []
        self.params: dict[str, Tensor] = {}

    def param(self, value, name: str) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), self, name)
        self.params[name] = t
        return t

    def constant(self, value) -> Tensor:
        return Tensor(np.asarray(value, dtype=np.float64), self)

    def record(self, value: np.ndarray, inputs: tuple, fn: Backward) -> Tensor:
        out = Tensor(value, self)
        self.records.append((out, inputs, fn))
        return out


def _lift(x, tape: Tape) -> Tensor:
    return x if isinstance(x, Tensor) else tape.constant(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise TypeError("at least one operand must be a Tensor")


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return tape.record(a.value + b.value, (a, b),
                       lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return tape.record(a.value - b.value, (a, b),
                       lambda g: (unbroadcast(g, a.shape), -unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)
    return tape.record(a.value * b.value, (a, b),
                       lambda g: (unbroadcast(g * b.value, a.shape),
                                  unbroadcast(g * a.value, b.shape)))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximated GELU."""
    v = x.value
    t = np.tanh(_GELU_C * (v + 0.044715 * v * v * v))

    def fn(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return x.tape.record(0.5 * v * (1.0 + t), (x,), fn)


# -- shape -------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes."""
    tape = _tape_of(a, b)
    a, b = _lift(a, tape), _lift(b, tape)

    def fn(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return tape.record(a.value @ b.value, (a, b), fn)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return x.tape.record(np.transpose(x.value, axes), (x,),
                         lambda g: (np.transpose(g, inverse),))


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.value.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return x.tape.record(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def take(x: Tensor, index) -> Tensor:
    """Basic (non-fancy) indexing, e.g. one row of a coefficient table."""
    def fn(g):
        full = np.zeros_like(x.value)
        full[index] = g
        return (full,)

    return x.tape.record(np.array(x.value[index]), (x,), fn)


def embed(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids)

    def fn(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        return (full,)

    return table.tape.record(table.value[ids], (table,), fn)


# -- reductions and normalizations --------------------------------------------

def total(x: Tensor) -> Tensor:
    return x.tape.record(np.array(x.value.sum()), (x,),
                         lambda g: (np.broadcast_to(g, x.shape).copy(),))


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    v = x.value
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    y = e / e.sum(axis=-1, keepdims=True)
    return x.tape.record(y, (x,),
                         lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def rms_norm(x: Tensor, gain: Tensor, eps: float = 1e-6) -> Tensor:
    """x / sqrt(mean(x^2) + eps) * gain over the last axis."""
    v = x.value
    r = 1.0 / np.sqrt((v * v).mean(axis=-1, keepdims=True) + eps)
    y0 = v * r

    def fn(g):
        gy0 = g * gain.value
        gx = r * (gy0 - y0 * (gy0 * y0).mean(axis=-1, keepdims=True))
        return gx, unbroadcast(g * y0, gain.shape)

    return x.tape.record(y0 * gain.value, (x, gain), fn)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean token-level cross-entropy; ``targets`` holds class ids."""
    v = logits.value
    flat = v.reshape(-1, v.shape[-1])
    t = np.asarray(targets).reshape(-1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(t.size)
    loss = float((log_z - shifted[rows, t]).mean())

    def fn(g):
        p = np.exp(shifted - log_z[:, None])
        p[rows, t] -= 1.0
        return ((g / t.size) * p.reshape(v.shape),)

    return logits.tape.record(np.array(loss), (logits,), fn)


# -- reverse pass ------------------------------------------------------------

def backward(tape: Tape, loss: Tensor, seed: float = 1.0) -> dict[str, np.ndarray]:
    """Gradients of ``loss`` for every parameter registered on ``tape``.

    Parameters that ``loss`` does not depend on get exact zeros.
    """
    if loss.tape is not tape or loss.value.size != 1:
        raise ValueError("loss must be a scalar tensor recorded on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.full(loss.shape, seed, dtype=np.float64)}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, fn(g)):
            if gi is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    result = {}
    for name, t in tape.params.items():
        g = grads.get(id(t))
        g = np.zeros_like(t.value) if g is None else np.asarray(g, dtype=np.float64).reshape(t.shape)
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for parameter {name!r}")
        result[name] = g
    return result

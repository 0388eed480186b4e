"""Minimal dense tensors with a fixed differentiable operator set.

Arrays are row-major with channels on the last axis; a single example has
shape ``[T, F, C]``. Batching is an outer loop in the callers.

Gradients are recorded on a :class:`Tape` while it is active::

    with Tape():
        loss = some_ops(x, w)
    backward(loss)

Only the operators defined here are differentiable.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

LAYER_NORM_EPS = 1e-6

# Counts Tensor constructions; used to check that code-rate switching allocates nothing.
_alloc = threading.local()


def allocation_count() -> int:
    return getattr(_alloc, "n", 0)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class TapeError(RuntimeError):
    """Raised when backward is requested without a recorded forward pass."""


class Tensor:
    """An n-D real array, optionally attached to a gradient tape."""

    __slots__ = ("data", "_tape", "_requires_grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self._tape: Tape | None = None
        self._requires_grad = requires_grad
        _alloc.n = allocation_count() + 1

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def requires_grad(self) -> bool:
        return self._requires_grad

    def numpy(self) -> np.ndarray:
        return self.data

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("tensor contains NaN or Inf")

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """A leaf tensor with a gradient buffer and a trainable flag."""

    __slots__ = ("grad", "trainable")

    def __init__(self, data, trainable: bool = True, dtype=None):
        super().__init__(data, dtype=dtype)
        self.grad = np.zeros_like(self.data)
        self.trainable = trainable

    @property
    def requires_grad(self) -> bool:
        return self.trainable

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


_Backward = Callable[[np.ndarray, Sequence[bool]], Sequence["np.ndarray | None"]]


class _Node:
    __slots__ = ("out", "parents", "fn")

    def __init__(self, out: Tensor, parents: tuple[Tensor, ...], fn: _Backward):
        self.out = out
        self.parents = parents
        self.fn = fn


_stack = threading.local()


def _active_tape() -> "Tape | None":
    tapes = getattr(_stack, "tapes", None)
    return tapes[-1] if tapes else None


class Tape:
    """Ordered record of executed operations for reverse-mode differentiation.

    A tape is single-use: :meth:`backward` releases the recorded nodes.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        if not hasattr(_stack, "tapes"):
            _stack.tapes = []
        _stack.tapes.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack.tapes.pop()

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if loss._tape is not self:
            raise TapeError("loss was not produced on this tape")
        if self.consumed:
            raise TapeError("backward() already ran on this tape")
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.data) if seed is None else seed
        }
        leaves: dict[int, Parameter] = {}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            needs = [p.requires_grad for p in node.parents]
            pgrads = node.fn(g, needs)
            for p, pg, need in zip(node.parents, pgrads, needs):
                if not need or pg is None:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if isinstance(p, Parameter):
                    leaves[key] = p
        # nodes and their outputs reference each other; dropping them frees the activations now
        self.nodes = []
        self.consumed = True
        for key, p in leaves.items():
            if p.trainable and key in grads:
                p.grad += grads[key]


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(param) into the ``grad`` of every trainable Parameter."""
    if loss._tape is None:
        raise TapeError("backward() called on a tensor without a recorded tape")
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    loss._tape.backward(loss)


def record(data: np.ndarray, parents: Iterable[Tensor], fn: _Backward) -> Tensor:
    """Wrap ``data`` as an op output and register ``fn`` on the active tape.

    ``fn(grad_out, needs)`` returns one gradient (or None) per parent.
    """
    parents = tuple(parents)
    needs_grad = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs_grad)
    tape = _active_tape()
    if tape is not None and needs_grad:
        out._tape = tape
        tape.nodes.append(_Node(out, parents, fn))
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# --------------------------------------------------------------------------
# convolutions

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    T, F, C = x.shape
    p = k // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    cols = np.empty((T, F, k, k, C), dtype=x.dtype)
    for dt in range(k):
        for df in range(k):
            cols[:, :, dt, df, :] = xp[dt:dt + T, df:df + F, :]
    return cols.reshape(T * F, k * k * C)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int], k: int) -> np.ndarray:
    T, F, C = shape
    p = k // 2
    dcols = dcols.reshape(T, F, k, k, C)
    dxp = np.zeros((T + 2 * p, F + 2 * p, C), dtype=dcols.dtype)
    for dt in range(k):
        for df in range(k):
            dxp[dt:dt + T, df:df + F, :] += dcols[:, :, dt, df, :]
    return dxp[p:p + T, p:p + F, :]


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-1 'same' convolution of ``x[T,F,Cin]`` with ``w[k,k,Cin,Cout]``."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects x[T,F,C] and w[k,k,Cin,Cout], got {x.shape} and {w.shape}")
    k, k2, cin, cout = w.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if x.shape[2] != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[2]}, kernel expects {cin}")
    if b is not None:
        b = as_tensor(b)
        if b.shape != (cout,):
            raise ShapeError(f"conv2d bias must have shape ({cout},), got {b.shape}")
    T, F, _ = x.shape
    cols = _im2col(x.data, k)
    wmat = w.data.reshape(k * k * cin, cout)
    out = cols @ wmat
    if b is not None:
        out += b.data
    out = out.reshape(T, F, cout)

    def fn(g, needs):
        g2 = g.reshape(T * F, cout)
        dx = _col2im(g2 @ wmat.T, x.shape, k) if needs[0] else None
        dw = (cols.T @ g2).reshape(w.shape) if needs[1] else None
        if b is None:
            return dx, dw
        db = g2.sum(axis=0) if needs[2] else None
        return dx, dw, db

    parents = (x, w) if b is None else (x, w, b)
    return record(out, parents, fn)


def conv1x1(x: Tensor, m: Tensor) -> Tensor:
    """Per-location channel mix: ``out[t,f,:] = x[t,f,:] @ m``."""
    x, m = as_tensor(x), as_tensor(m)
    if x.data.ndim != 3 or m.data.ndim != 2 or x.shape[2] != m.shape[0]:
        raise ShapeError(f"conv1x1 expects x[T,F,Cin] and m[Cin,Cout], got {x.shape} and {m.shape}")
    T, F, cin = x.shape
    xf = x.data.reshape(T * F, cin)
    out = (xf @ m.data).reshape(T, F, m.shape[1])

    def fn(g, needs):
        g2 = g.reshape(T * F, -1)
        dx = (g2 @ m.data.T).reshape(x.shape) if needs[0] else None
        dm = xf.T @ g2 if needs[1] else None
        return dx, dm

    return record(out, (x, m), fn)


# --------------------------------------------------------------------------
# normalization and elementwise ops

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, axes: Sequence[int] | None = None,
               eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over ``axes`` (default: all), then apply elementwise ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = tuple(range(x.data.ndim)) if axes is None else tuple(a % x.data.ndim for a in axes)
    group = int(np.prod([x.shape[a] for a in axes]))
    if group == 0:
        raise ShapeError("layer_norm over an empty normalization group")
    try:
        np.broadcast_shapes(gamma.shape, x.shape)
        np.broadcast_shapes(beta.shape, x.shape)
    except ValueError as e:
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} vs input {x.shape}") from e
    mu = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = gamma.data * xhat + beta.data

    def fn(g, needs):
        dx = dgamma = dbeta = None
        if needs[0]:
            dxhat = g * gamma.data
            dx = inv * (dxhat - dxhat.mean(axis=axes, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
        if needs[1]:
            dgamma = _unbroadcast(g * xhat, gamma.shape)
        if needs[2]:
            dbeta = _unbroadcast(g, beta.shape)
        return dx, dgamma, dbeta

    return record(out, (x, gamma, beta), fn)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g, needs: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)
    return record(s, (x,), lambda g, needs: (g * s * (1.0 - s),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def add(x: Tensor, y: Tensor) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"add expects equal shapes, got {x.shape} and {y.shape}")
    return record(x.data + y.data, (x, y), lambda g, needs: (g, g))


def mul(x: Tensor, y: Tensor) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    if x.shape != y.shape:
        raise ShapeError(f"mul expects equal shapes, got {x.shape} and {y.shape}")
    return record(x.data * y.data, (x, y), lambda g, needs: (g * y.data, g * x.data))


def scale(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    return record(x.data * c, (x,), lambda g, needs: (g * c,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    x = as_tensor(x)
    return record(np.asarray(x.data.sum()), (x,), lambda g, needs: (np.broadcast_to(g, x.shape).copy(),))


def select_cells(x: Tensor, mask: np.ndarray) -> Tensor:
    """Gather the ``[t, f]`` cells where ``mask`` is true, giving ``[n, C]``."""
    x = as_tensor(x)
    if mask.shape != x.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} does not match grid {x.shape[:2]}")
    out = x.data[mask]

    def fn(g, needs):
        dx = np.zeros_like(x.data)
        dx[mask] = g
        return (dx,)

    return record(out, (x,), fn)

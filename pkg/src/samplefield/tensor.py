"""Dense tensors with reverse-mode automatic differentiation.

Arrays are numpy ndarrays; every differentiable operation that touches a
gradient-requiring tensor appends one node to a thread-local tape. Because
execution is eager, tape order is already topological, so ``backward``
is a single reverse sweep that visits each node exactly once. The tape is
freed after the sweep; graphs are not reusable.

Float32 is the working precision. Verification code (gradient checks and
the like) switches to float64 via ``using_dtype("float64")`` or
``set_default_dtype``.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable

import numpy as np

from .errors import ShapeError, UsageError

_DTYPES = {"float32": np.float32, "float64": np.float64}


class _State(threading.local):
    def __init__(self):
        self.tape: list[_Node] = []
        self.grad_enabled: bool = True
        self.dtype = np.float32


_STATE = _State()


def set_default_dtype(name: str) -> None:
    """Set the working precision ("float32" or "float64") for new tensors."""
    if name not in _DTYPES:
        raise ValueError(f"unsupported dtype {name!r}; expected one of {sorted(_DTYPES)}")
    _STATE.dtype = _DTYPES[name]


def get_default_dtype() -> np.dtype:
    return np.dtype(_STATE.dtype)


@contextmanager
def using_dtype(name: str):
    """Temporarily switch the default dtype (e.g. 64-bit verification mode)."""
    prev = _STATE.dtype
    set_default_dtype(name)
    try:
        yield
    finally:
        _STATE.dtype = prev


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference mode)."""
    prev = _STATE.grad_enabled
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = prev


def grad_enabled() -> bool:
    return _STATE.grad_enabled


def tape_size() -> int:
    return len(_STATE.tape)


def clear_tape() -> None:
    """Drop all recorded nodes without running a backward sweep."""
    _STATE.tape.clear()


class _Node:
    """One executed operation: its output and the adjoint callback."""

    __slots__ = ("out", "fn")

    def __init__(self, out: "Tensor", fn: Callable[[np.ndarray], None]):
        self.out = out
        self.fn = fn


class Tensor:
    """A dense numeric array that can participate in backpropagation.

    ``data`` is the value, ``grad`` is filled by ``backward`` for every
    tensor with ``requires_grad=True``. Tensors produced by operations on
    gradient-requiring inputs track their provenance through the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_node")

    def __init__(self, data, requires_grad: bool = False, dtype: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype == "keep":
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(_STATE.dtype)
        else:
            target = _DTYPES[dtype] if dtype else _STATE.dtype
            if arr.dtype != target:
                arr = arr.astype(target)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node: _Node | None = None

    # -- construction helpers ------------------------------------------------

    @staticmethod
    def zeros(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.zeros(shape, dtype=_STATE.dtype), requires_grad)

    @staticmethod
    def ones(shape, requires_grad: bool = False) -> "Tensor":
        return Tensor(np.ones(shape, dtype=_STATE.dtype), requires_grad)

    # -- properties ----------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def astype(self, name: str) -> "Tensor":
        return Tensor(self.data.astype(_DTYPES[name]), self.requires_grad, dtype="keep")

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: Tensor, fn: Callable[[np.ndarray], None], inputs: Iterable[Tensor]) -> Tensor:
    if _STATE.grad_enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = _Node(out, fn)
        out._node = node
        _STATE.tape.append(node)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape`` by summing expanded axes."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ----------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data + b.data, dtype="keep")

    def fn(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _record(out, fn, (a, b))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data * b.data, dtype="keep")

    def fn(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _record(out, fn, (a, b))


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = Tensor(a.data / b.data, dtype="keep")

    def fn(g):
        _accum(a, _unbroadcast(g / b.data, a.data.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _record(out, fn, (a, b))


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product; in 64-bit the inner accumulation is sequential.

    BLAS reorders the k-sum (blocking/SIMD), which is fine for 32-bit
    training but breaks the verification contract that 64-bit results
    match a naive triple loop to the last bit. The loop below adds the
    k terms in index order, exactly like the classic three nested loops,
    while staying vectorized over the output.
    """
    if a.dtype != np.float64 and b.dtype != np.float64:
        return a @ b
    out = np.zeros(a.shape[:-1] + (b.shape[-1],), dtype=np.result_type(a, b))
    for t in range(a.shape[-1]):
        out += a[..., :, t, None] * b[..., t, None, :]
    return out


def matmul(a, b) -> Tensor:
    """Matrix product of 2-D operands or stacked 3-D operands.

    Stacked form requires identical leading extents; broadcasting across
    the batch axis is deliberately not supported.
    """
    a, b = _wrap(a), _wrap(b)
    sa, sb = a.data.shape, b.data.shape
    ok = (
        len(sa) == len(sb)
        and len(sa) in (2, 3)
        and sa[-1] == sb[-2]
        and (len(sa) == 2 or sa[0] == sb[0])
    )
    if not ok:
        raise ShapeError(f"matmul: incompatible shapes {sa} and {sb}")
    out = Tensor(_mm(a.data, b.data), dtype="keep")

    def fn(g):
        _accum(a, _mm(g, b.data.swapaxes(-1, -2)))
        _accum(b, _mm(a.data.swapaxes(-1, -2), g))

    return _record(out, fn, (a, b))


# -- elementwise functions -------------------------------------------------------


def exp(x) -> Tensor:
    x = _wrap(x)
    y = np.exp(x.data)
    out = Tensor(y, dtype="keep")

    def fn(g):
        _accum(x, g * y)

    return _record(out, fn, (x,))


def log(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(np.log(x.data), dtype="keep")

    def fn(g):
        _accum(x, g / x.data)

    return _record(out, fn, (x,))


def tanh(x) -> Tensor:
    x = _wrap(x)
    y = np.tanh(x.data)
    out = Tensor(y, dtype="keep")

    def fn(g):
        _accum(x, g * (1.0 - y * y))

    return _record(out, fn, (x,))


def square(x) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data * x.data, dtype="keep")

    def fn(g):
        _accum(x, 2.0 * g * x.data)

    return _record(out, fn, (x,))


def clip(x, lo: float | None, hi: float | None) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes where lo <= x <= hi.

    The boundary is inclusive so a value sitting exactly on a clamp edge
    still receives gradient.
    """
    x = _wrap(x)
    out = Tensor(np.clip(x.data, lo, hi), dtype="keep")
    mask = np.ones_like(x.data, dtype=bool)
    if lo is not None:
        mask &= x.data >= lo
    if hi is not None:
        mask &= x.data <= hi

    def fn(g):
        _accum(x, g * mask)

    return _record(out, fn, (x,))


_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


def gelu(x) -> Tensor:
    """GELU nonlinearity, tanh approximation."""
    x = _wrap(x)
    v = x.data
    inner = _GELU_C0 * (v + _GELU_C1 * v**3)
    t = np.tanh(inner)
    out = Tensor(0.5 * v * (1.0 + t), dtype="keep")

    def fn(g):
        d_inner = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * v * v)
        d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner
        _accum(x, g * d)

    return _record(out, fn, (x,))


# -- reductions ------------------------------------------------------------------


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims), dtype="keep")

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _record(out, fn, (x,))


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims), dtype="keep")
    n = x.data.size if axis is None else x.data.shape[axis]

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g / n, x.data.shape))

    return _record(out, fn, (x,))


# -- shape manipulation ------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    out = Tensor(x.data.reshape(shape), dtype="keep")

    def fn(g):
        _accum(x, g.reshape(x.data.shape))

    return _record(out, fn, (x,))


def transpose(x, axes) -> Tensor:
    x = _wrap(x)
    axes = tuple(axes)
    out = Tensor(x.data.transpose(axes), dtype="keep")
    inv = tuple(np.argsort(axes))

    def fn(g):
        _accum(x, g.transpose(inv))

    return _record(out, fn, (x,))


def take(x, key) -> Tensor:
    """Basic indexing (ints, slices, ellipsis) with scatter-back gradient."""
    x = _wrap(x)
    out = Tensor(x.data[key], dtype="keep")

    def fn(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        _accum(x, gx)

    return _record(out, fn, (x,))


def gather(x, index: np.ndarray, axis: int = -1) -> Tensor:
    """``np.take_along_axis`` with accumulation into repeated indices on backward."""
    x = _wrap(x)
    index = np.asarray(index)
    out = Tensor(np.take_along_axis(x.data, index, axis=axis), dtype="keep")

    def fn(g):
        gx = np.zeros_like(x.data)
        grids = list(np.indices(index.shape))
        grids[axis] = index
        np.add.at(gx, tuple(grids), g)
        _accum(x, gx)

    return _record(out, fn, (x,))


# -- fused neural-net primitives -------------------------------------------------


def softmax(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis``, computed with max subtraction for stability."""
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, dtype="keep")

    def fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - dot))

    return _record(out, fn, (x,))


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance, then affine."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    if x.data.shape[-1] != gain.data.shape[-1] or x.data.shape[-1] != bias.data.shape[-1]:
        raise ShapeError(
            f"layer_norm: last axis {x.data.shape} vs gain {gain.data.shape} / bias {bias.data.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data, dtype="keep")
    lead = tuple(range(x.data.ndim - 1))

    def fn(g):
        _accum(gain, (g * xhat).sum(axis=lead))
        _accum(bias, g.sum(axis=lead))
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        _accum(x, inv * (dxhat - m1 - xhat * m2))

    return _record(out, fn, (x, gain, bias))


# -- backward sweep ------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss over the active tape.

    Fills ``grad`` on every gradient-requiring tensor reachable from
    ``loss`` and frees the tape. Tensors not reachable from ``loss`` are
    left untouched (their nodes are skipped).
    """
    if loss.data.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if loss._node is None:
        raise UsageError("backward on a tensor detached from the tape")
    tape = _STATE.tape
    loss.grad = np.ones_like(loss.data)
    try:
        for node in reversed(tape):
            if node.out.grad is None:
                continue
            node.fn(node.out.grad)
    finally:
        tape.clear()

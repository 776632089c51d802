"""Dense tensors with reverse-mode automatic differentiation.

A tape-style engine on top of numpy: every operation that touches a
gradient-tracking tensor records its parents and a backward closure.
Graphs are rebuilt on every training step and discarded after
``backward``.  64-bit floats are the default; call ``set_default_dtype``
or use the ``default_dtype`` context manager for 32-bit runs.

Broadcasting is deliberately restricted: binary ops accept equal shapes,
a 0-d scalar on the right, or a 1-D right operand matching the left
operand's trailing axis (bias-style).  Anything else is a ShapeError.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class DomainError(ValueError):
    """Operand values lie outside an operation's numeric domain."""


class ContractError(ValueError):
    """An operation was called in a way its contract forbids."""


_DEFAULT_DTYPE = np.float64
_ids = itertools.count()

# guard used when differentiating sqrt/magnitude at zero
_SQRT_EPS = 1e-12


def set_default_dtype(dtype) -> None:
    """Set the dtype used when wrapping plain data in Tensors ('float32'/'float64')."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ContractError(f"unsupported dtype {dtype!r}; use float32 or float64")
    _DEFAULT_DTYPE = dt.type


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextmanager
def default_dtype(dtype):
    """Temporarily switch the default dtype (restored on exit)."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


class Tensor:
    """N-d value array, optionally tracking gradients through a tape.

    ``data`` is a numpy array and is never mutated by operations; the
    optimizer mutates leaf data in place between steps, after the step's
    graph has been consumed.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple = (), _backward: Callable | None = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE) if not isinstance(data, np.ndarray) \
            else data
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._id = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return ew_binary("add", self, other)

    def __radd__(self, other):
        return ew_binary("add", _wrap(other, self), self)

    def __sub__(self, other):
        return ew_binary("sub", self, other)

    def __rsub__(self, other):
        return ew_binary("sub", _wrap(other, self), self)

    def __mul__(self, other):
        return ew_binary("mul", self, other)

    def __rmul__(self, other):
        return ew_binary("mul", _wrap(other, self), self)

    def __truediv__(self, other):
        return ew_binary("div", self, other)

    def __neg__(self):
        return ew_unary("negate", self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return reduce("sum", self, axis)

    def mean(self, axis=None):
        return reduce("mean", self, axis)

    def sin(self):
        return ew_unary("sin", self)

    def cos(self):
        return ew_unary("cos", self)

    def exp(self):
        return ew_unary("exp", self)

    def log(self):
        return ew_unary("log", self)

    def abs(self):
        return ew_unary("abs", self)

    def square(self):
        return ew_unary("square", self)

    def sqrt(self):
        return ew_unary("sqrt", self)

    def relu(self):
        return ew_unary("relu", self)

    def silu(self):
        return ew_unary("silu", self)

    def scale(self, alpha: float):
        return ew_unary("scale", self, alpha)

    def shift(self, alpha: float):
        return ew_unary("shift", self, alpha)

    def clamp(self, lo: float, hi: float):
        return ew_unary("clamp", self, (lo, hi))

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self):
        return transpose(self)

    def backward(self):
        backward(self)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _node(data: np.ndarray, parents: Sequence[Tensor], bwd: Callable) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=bwd)
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad += g


# -- elementwise and linear-algebra operations ----------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product with gradients dA = dC.Bᵀ, dB = Aᵀ.dC."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} x {b.shape} do not chain")
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(out_data, (a, b), bwd)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D tensor, got shape {a.shape}")

    def bwd(g):
        _accum(a, g.T)

    return _node(a.data.T, (a,), bwd)


_UNARY_TAGS = ("sin", "cos", "exp", "log", "abs", "square", "sqrt", "relu",
               "silu", "negate", "scale", "shift", "clamp")


def ew_unary(tag: str, a: Tensor, alpha=None) -> Tensor:
    """Elementwise unary op; ``alpha`` parameterizes scale/shift/clamp."""
    a = _as_tensor(a)
    x = a.data
    if tag == "sin":
        out, dfn = np.sin(x), lambda g: g * np.cos(x)
    elif tag == "cos":
        out, dfn = np.cos(x), lambda g: -g * np.sin(x)
    elif tag == "exp":
        out = np.exp(x)
        dfn = lambda g: g * out
    elif tag == "log":
        if np.any(x <= 0.0):
            raise DomainError("log requires strictly positive inputs")
        out, dfn = np.log(x), lambda g: g / x
    elif tag == "abs":
        # subgradient 0 at exactly 0 (np.sign(0) == 0)
        out, dfn = np.abs(x), lambda g: g * np.sign(x)
    elif tag == "square":
        out, dfn = np.square(x), lambda g: g * (2.0 * x)
    elif tag == "sqrt":
        if np.any(x < 0.0):
            raise DomainError("sqrt requires non-negative inputs")
        out = np.sqrt(x)
        dfn = lambda g: g * (0.5 / np.maximum(out, _SQRT_EPS))
    elif tag == "relu":
        out, dfn = np.maximum(x, 0.0), lambda g: g * (x > 0.0)
    elif tag == "silu":
        sig = expit(x)
        out = x * sig
        dfn = lambda g: g * (sig * (1.0 + x * (1.0 - sig)))
    elif tag == "negate":
        out, dfn = -x, lambda g: -g
    elif tag == "scale":
        out, dfn = alpha * x, lambda g: alpha * g
    elif tag == "shift":
        out, dfn = x + alpha, lambda g: g
    elif tag == "clamp":
        lo, hi = alpha
        out = np.clip(x, lo, hi)
        mask = (x >= lo) & (x <= hi)
        dfn = lambda g: g * mask
    else:
        raise ContractError(f"unknown unary tag {tag!r}")

    def bwd(g):
        _accum(a, dfn(g))

    return _node(out, (a,), bwd)


def _broadcast_mode(a: Tensor, b: Tensor) -> str:
    if a.shape == b.shape:
        return "equal"
    if b.data.ndim == 0:
        return "scalar"
    if a.data.ndim == 0:
        return "scalar_left"
    if b.data.ndim == 1 and a.data.ndim >= 2 and a.shape[-1] == b.shape[0]:
        return "trailing"
    raise ShapeError(f"shapes {a.shape} and {b.shape} are neither equal nor "
                     "trailing-axis broadcastable")


def _reduce_to(g: np.ndarray, mode: str, shape: tuple) -> np.ndarray:
    if mode == "equal":
        return g
    if mode == "scalar":
        return np.asarray(g.sum())
    axes = tuple(range(g.ndim - 1))
    return g.sum(axis=axes)


def ew_binary(tag: str, a: Tensor, b: Tensor) -> Tensor:
    a = _as_tensor(a)
    b = _wrap(b, a)
    mode = _broadcast_mode(a, b)
    amode = "scalar" if mode == "scalar_left" else "equal"
    bmode = "equal" if mode == "scalar_left" else mode
    x, y = a.data, b.data
    if tag == "add":
        out = x + y
        da = lambda g: _reduce_to(g, amode, a.shape)
        db = lambda g: _reduce_to(g, bmode, b.shape)
    elif tag == "sub":
        out = x - y
        da = lambda g: _reduce_to(g, amode, a.shape)
        db = lambda g: -_reduce_to(g, bmode, b.shape)
    elif tag == "mul":
        out = x * y
        da = lambda g: _reduce_to(g * y, amode, a.shape)
        db = lambda g: _reduce_to(g * x, bmode, b.shape)
    elif tag == "div":
        if np.any(y == 0.0):
            raise DomainError("division by zero")
        out = x / y
        da = lambda g: _reduce_to(g / y, amode, a.shape)
        db = lambda g: _reduce_to(-g * x / (y * y), bmode, b.shape)
    else:
        raise ContractError(f"unknown binary tag {tag!r}")

    def bwd(g):
        if a.requires_grad:
            _accum(a, da(g))
        if b.requires_grad:
            _accum(b, db(g))

    return _node(out, (a, b), bwd)


def reduce(tag: str, a: Tensor, axis: int | None = None) -> Tensor:
    a = _as_tensor(a)
    if axis is not None:
        if not (0 <= axis < a.data.ndim):
            raise ShapeError(f"axis {axis} out of range for shape {a.shape}")
    if tag == "sum":
        out, scale_back = np.sum(a.data, axis=axis), 1.0
    elif tag == "mean":
        n = a.data.size if axis is None else a.shape[axis]
        out, scale_back = np.mean(a.data, axis=axis), 1.0 / n
    else:
        raise ContractError(f"unknown reduce tag {tag!r}")

    def bwd(g):
        if axis is None:
            _accum(a, np.broadcast_to(np.asarray(g * scale_back, dtype=a.data.dtype),
                                      a.shape))
        else:
            _accum(a, np.broadcast_to(np.expand_dims(g, axis) * scale_back, a.shape))

    return _node(np.asarray(out), (a,), bwd)


# -- structural operations -------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} ({a.size} values) to {shape}")

    def bwd(g):
        _accum(a, g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), bwd)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors."""
    tensors = [_as_tensor(t) for t in tensors]
    if any(t.data.ndim != 1 for t in tensors):
        raise ShapeError("concat expects 1-D tensors")
    sizes = [t.size for t in tensors]
    offs = np.cumsum([0] + sizes)

    def bwd(g):
        for t, s, e in zip(tensors, offs[:-1], offs[1:]):
            _accum(t, g[s:e])

    return _node(np.concatenate([t.data for t in tensors]), tuple(tensors), bwd)


def narrow(a: Tensor, start: int, length: int) -> Tensor:
    """Contiguous 1-D slice a[start:start+length]."""
    a = _as_tensor(a)
    if a.data.ndim != 1:
        raise ShapeError(f"narrow expects a 1-D tensor, got shape {a.shape}")
    if start < 0 or start + length > a.size:
        raise ShapeError(f"narrow [{start}:{start + length}] out of range for size {a.size}")

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[start:start + length] += g

    return _node(a.data[start:start + length], (a,), bwd)


def expand_last(a: Tensor, n: int) -> Tensor:
    """Repeat along a new trailing axis of size n; gradient sums it back."""
    a = _as_tensor(a)
    out = np.broadcast_to(a.data[..., None], a.shape + (n,))

    def bwd(g):
        _accum(a, g.sum(axis=-1))

    return _node(np.ascontiguousarray(out), (a,), bwd)


def pad_last(a: Tensor, width: int) -> Tensor:
    """Zero-pad the trailing axis up to ``width``."""
    a = _as_tensor(a)
    n = a.shape[-1]
    if width < n:
        raise ShapeError(f"pad_last target {width} smaller than current {n}")
    if width == n:
        return a
    pad = [(0, 0)] * (a.data.ndim - 1) + [(0, width - n)]
    out = np.pad(a.data, pad)

    def bwd(g):
        _accum(a, g[..., :n])

    return _node(out, (a,), bwd)


def frame_signal(a: Tensor, window: int, hop: int) -> Tensor:
    """Slice a 1-D signal into overlapping frames of length ``window``."""
    a = _as_tensor(a)
    if a.data.ndim != 1:
        raise ShapeError(f"frame_signal expects a 1-D signal, got shape {a.shape}")
    n = a.size
    if n < window:
        raise ContractError(f"signal of {n} samples is shorter than one {window}-sample frame")
    n_frames = (n - window) // hop + 1
    idx = hop * np.arange(n_frames)[:, None] + np.arange(window)[None, :]
    out = a.data[idx]

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            acc = np.bincount(idx.ravel(), weights=g.ravel(), minlength=n)
            a.grad += acc.astype(a.data.dtype, copy=False)

    return _node(out, (a,), bwd)


def conv1d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D convolution: x (C_in, T), w (C_out, C_in, K), b (C_out,) -> (C_out, T_out)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 3 or x.shape[0] != w.shape[1]:
        raise ShapeError(f"conv1d shapes x{x.shape} w{w.shape} incompatible")
    c_in, t = x.shape
    c_out, _, k = w.shape
    t_pad = t + 2 * padding
    t_out = (t_pad - k) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d kernel {k} does not fit input length {t} (pad {padding})")

    xp = np.pad(x.data, ((0, 0), (padding, padding))) if padding else x.data
    # patches[(ci*k + j), t_out] over flattened padded input
    cols = stride * np.arange(t_out)[None, :] + np.arange(k)[:, None]      # (k, t_out)
    idx = (np.arange(c_in)[:, None, None] * t_pad + cols[None]).reshape(c_in * k, t_out)
    patches = xp.ravel()[idx]                                              # (c_in*k, t_out)
    w2 = w.data.reshape(c_out, c_in * k)
    out = w2 @ patches
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (c_out,):
            raise ShapeError(f"conv1d bias shape {b.shape} != ({c_out},)")
        out = out + b.data[:, None]

    def bwd(g):
        if b is not None:
            _accum(b, g.sum(axis=1))
        _accum(w, (g @ patches.T).reshape(w.shape))
        if x.requires_grad:
            dpatches = w2.T @ g                                            # (c_in*k, t_out)
            flat = np.bincount(idx.ravel(), weights=dpatches.ravel(), minlength=c_in * t_pad)
            dxp = flat.reshape(c_in, t_pad).astype(x.data.dtype, copy=False)
            _accum(x, dxp[:, padding:padding + t] if padding else dxp)

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bwd)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- backward pass and gradient checking -----------------------------------


def _reachable(root: Tensor) -> list[Tensor]:
    seen = {id(root): root}
    stack = [root]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if id(p) not in seen:
                seen[id(p)] = p
                stack.append(p)
    return list(seen.values())


def backward(loss: Tensor, leaves: Iterable[Tensor] | None = None) -> dict[int, np.ndarray] | None:
    """Reverse sweep from a scalar loss; repeat calls recompute identical grads.

    When ``leaves`` is given, every leaf is guaranteed a gradient buffer
    afterwards (zeros if unreachable from the loss) and a map from leaf
    id() to gradient array is returned.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    nodes = _reachable(loss)
    for node in nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in sorted(nodes, key=lambda n: n._id, reverse=True):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if leaves is None:
        return None
    out = {}
    for leaf in leaves:
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        out[id(leaf)] = leaf.grad
    return out


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
               n_samples: int | None = None, seed: int = 0,
               denom_floor: float = 1e-6) -> float:
    """Worst relative error between analytic gradients of f and central differences.

    Checks every coordinate, or ``n_samples`` seeded random coordinates
    per input tensor.  Reports, never raises.
    """
    inputs = list(inputs)
    loss = f(*inputs)
    grads = backward(loss, leaves=inputs)
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for t in inputs:
        flat = t.data.reshape(-1)
        n = flat.size
        if n_samples is None or n_samples >= n:
            coords = range(n)
        else:
            coords = rng.choice(n, size=n_samples, replace=False)
        gflat = grads[id(t)].reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f(*inputs).data)
            flat[i] = orig - h
            lo = float(f(*inputs).data)
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * h)
            analytic = gflat[i]
            denom = max(abs(analytic), abs(numeric), denom_floor)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst

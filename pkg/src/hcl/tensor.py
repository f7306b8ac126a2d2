"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every operation records its inputs and a backward closure
on the output tensor, so the tape is rebuilt from scratch each step and
freed with it.  Gradients are accumulated in deterministic tape order,
which makes repeated runs bitwise identical.

Supported operation kinds: matmul, add, scalar multiply, elementwise
multiply, relu, exp, mean, sum, concat, L2-normalize, reshape, transpose,
2-D convolution, 2-D average pooling, softmax cross-entropy with logits.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatchError(ValueError):
    """Input shapes do not conform to an operation's shape rule."""

    def __init__(self, kind: str, *shapes):
        super().__init__(f"{kind}: incompatible shapes {' vs '.join(str(tuple(s)) for s in shapes)}")


class NonFiniteError(ArithmeticError):
    """A tensor involved in an operation contains NaN or Inf."""

    def __init__(self, kind: str, role: str = "output"):
        super().__init__(f"{kind}: non-finite values in {role}")


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    # ascontiguousarray would promote 0-d scalars to shape (1,)
    return arr if arr.ndim == 0 else np.ascontiguousarray(arr)


def _check_finite(arr: np.ndarray, kind: str, role: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(kind, role)


class Tensor:
    """A float64 array node on the autodiff tape.

    `data` is always contiguous float64.  Tensors produced by operations
    keep references to their inputs (`_parents`) and a closure
    (`_backward`) that propagates `self.grad` to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_kind")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._kind = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, kind={self._kind})"

    # ---- graph plumbing ------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        """Leaf tensor sharing this tensor's values; blocks gradient flow."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out._kind = "detach"
        return out

    def backward(self) -> None:
        """Reverse-mode pass from a scalar loss.

        Accumulates d(loss)/d(leaf) into `.grad` of every tensor with
        requires_grad=True that the loss depends on.  Visits each tape
        node exactly once, in deterministic order.
        """
        if self.size != 1:
            raise ValueError(f"backward: loss must be scalar, got shape {self.shape}")
        if not self._parents:
            raise ValueError("backward: empty tape (loss was not produced by any operation)")

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in visited:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ---- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scalar_multiply(other, -1.0))
        return add(self, Tensor(np.asarray(other) * -1.0))

    def __neg__(self):
        return scalar_multiply(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return multiply(self, other)
        return scalar_multiply(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def mean(self):
        return mean(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self):
        return transpose(self)

    def l2_normalize(self, axis: int = -1):
        return l2_normalize(self, axis=axis)


class Parameter(Tensor):
    """Trainable tensor: always carries an allocated gradient buffer."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward, kind: str) -> Tensor:
    _check_finite(data, kind, "output")
    out = Tensor.__new__(Tensor)
    out.data = _as_array(data)
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    out._kind = kind
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    else:
        out._parents = parents  # keep graph shape for tape-empty detection
        out._backward = None
    return out


def _check_inputs(kind: str, *tensors: Tensor) -> None:
    for t in tensors:
        _check_finite(t.data, kind, "input")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---- elementwise and linear-algebra kinds -------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_inputs("add", a, b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatchError("add", a.shape, b.shape) from None

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward, "add")


def multiply(a: Tensor, b: Tensor) -> Tensor:
    _check_inputs("multiply", a, b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatchError("multiply", a.shape, b.shape) from None

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward, "multiply")


def scalar_multiply(a: Tensor, c: float) -> Tensor:
    _check_inputs("scalar_multiply", a)
    c = float(c)
    if not np.isfinite(c):
        raise NonFiniteError("scalar_multiply", "scalar input")

    def backward(g):
        a._accumulate(g * c)

    return _make(a.data * c, (a,), backward, "scalar_multiply")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_inputs("matmul", a, b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    data = a.data @ b.data

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(data, (a, b), backward, "matmul")


def relu(a: Tensor) -> Tensor:
    _check_inputs("relu", a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        a._accumulate(g * (a.data > 0.0))

    return _make(data, (a,), backward, "relu")


def exp(a: Tensor) -> Tensor:
    _check_inputs("exp", a)
    data = np.exp(a.data)

    def backward(g):
        a._accumulate(g * data)

    return _make(data, (a,), backward, "exp")


def mean(a: Tensor) -> Tensor:
    _check_inputs("mean", a)
    n = a.size

    def backward(g):
        a._accumulate(np.full_like(a.data, float(g) / n))

    return _make(np.asarray(a.data.mean()), (a,), backward, "mean")


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    _check_inputs("sum", a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.full_like(a.data, float(g)))
        else:
            gx = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gx, a.shape).copy())

    return _make(np.asarray(data), (a,), backward, "sum")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    _check_inputs("concat", *tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concat", *[t.shape for t in tensors]) from None
    ax = axis % data.ndim
    extents = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + extents)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * data.ndim
            idx[ax] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return _make(data, tensors, backward, "concat")


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    """Scale rows along `axis` to unit Euclidean norm.

    A zero vector cannot be normalized; that is an error rather than a
    silent epsilon result, because denormalized features would corrupt
    every similarity and uniformity diagnostic downstream.
    """
    _check_inputs("l2_normalize", a)
    norm = np.sqrt(np.sum(a.data * a.data, axis=axis, keepdims=True))
    if np.any(norm == 0.0):
        raise ValueError("l2_normalize: zero vector along normalization axis")
    unit = a.data / norm

    def backward(g):
        dot = np.sum(unit * g, axis=axis, keepdims=True)
        a._accumulate((g - unit * dot) / norm)

    return _make(unit, (a,), backward, "l2_normalize")


def reshape(a: Tensor, shape) -> Tensor:
    _check_inputs("reshape", a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, shape) from None

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), backward, "reshape")


def transpose(a: Tensor) -> Tensor:
    _check_inputs("transpose", a)
    if a.data.ndim != 2:
        raise ShapeMismatchError("transpose", a.shape)

    def backward(g):
        a._accumulate(g.T)

    return _make(a.data.T, (a,), backward, "transpose")


# ---- convolution stack ---------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Direct 2-D convolution (cross-correlation), NCHW layout.

    x: (N, C, H, W); w: (F, C, kh, kw); b: (F,) or None.
    Implemented via im2col + matmul; images here are tiny so this is
    plenty fast without FFT.
    """
    _check_inputs("conv2d", x, w)
    if x.data.ndim != 4 or w.data.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatchError("conv2d", x.shape, w.shape)
    if b is not None:
        _check_inputs("conv2d", b)
        if b.shape != (w.shape[0],):
            raise ShapeMismatchError("conv2d bias", b.shape, (w.shape[0],))
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    s, p = int(stride), int(padding)
    ho = (h + 2 * p - kh) // s + 1
    wo = (wd + 2 * p - kw) // s + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatchError("conv2d", x.shape, w.shape)

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wmat = w.data.reshape(f, -1)
    out = cols @ wmat.T
    if b is not None:
        out = out + b.data
    data = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
        w._accumulate((gmat.T @ cols).reshape(w.shape))
        if b is not None:
            b._accumulate(gmat.sum(axis=0))
        gcols = gmat @ wmat
        gwin = gcols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
        gxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += gwin[:, :, :, :, i, j]
        x._accumulate(gxp[:, :, p : p + h, p : p + wd] if p else gxp)

    parents = (x, w) if b is None else (x, w, b)
    return _make(data, parents, backward, "conv2d")


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    """Non-overlapping k-by-k average pooling; extents must divide by k."""
    _check_inputs("avg_pool2d", x)
    if x.data.ndim != 4 or x.shape[2] % k or x.shape[3] % k:
        raise ShapeMismatchError("avg_pool2d", x.shape, (k, k))
    n, c, h, w = x.shape
    data = x.data.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(g):
        x._accumulate(np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k))

    return _make(data, (x,), backward, "avg_pool2d")


# ---- losses ---------------------------------------------------------------


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of integer class labels against logits (N, C)."""
    _check_inputs("softmax_cross_entropy", logits)
    if logits.data.ndim != 2:
        raise ShapeMismatchError("softmax_cross_entropy", logits.shape)
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatchError("softmax_cross_entropy", logits.shape, labels.shape)
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {c})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sez)
    losses = -log_probs[np.arange(n), labels]
    data = np.asarray(losses.mean())

    def backward(g):
        grad = ez / sez
        grad[np.arange(n), labels] -= 1.0
        logits._accumulate(grad * (float(g) / n))

    return _make(data, (logits,), backward, "softmax_cross_entropy")


def parameters_of(tensors: Iterable[Tensor]) -> list[Parameter]:
    """Flatten helper: keep only Parameter instances, in input order."""
    return [t for t in tensors if isinstance(t, Parameter)]

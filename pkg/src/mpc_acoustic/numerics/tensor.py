"""Tensor values and tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
at least one input requires a gradient. Outside a tape every op is a plain
numpy computation, which is what evaluation and decoding use.

Typical use::

    with Tape() as tape:
        loss = model_loss(params, batch)
    backward(tape, loss)
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an op."""


class TapeError(RuntimeError):
    """Raised on misuse of a tape (replay, missing loss, non-scalar loss)."""


_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Nodes are appended in execution order, so the list is already a
    topological order of the graph. A tape can be differentiated once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)


class Tensor:
    """An n-dimensional array with an optional gradient slot."""

    __slots__ = ("data", "requires_grad", "grad", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    # -- basic protocol ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _record(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = current_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.nodes.append(_Node(out, tuple(inputs), backward))
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary_operands(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    else:
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _broadcast_shape("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _binary_operands(a, b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _record(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _record(np.log(x.data), (x,), lambda g: (g / x.data,))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _record(np.where(pos, x.data, 0).astype(x.dtype, copy=False), (x,), lambda g: (g * pos,))


def abs_(x: Tensor) -> Tensor:
    return _record(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            if b.ndim == 2:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _record(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis; weight is (in, out)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    x2 = x.data.reshape(-1, x.shape[-1])
    out2 = x2 @ weight.data
    if bias is not None:
        out2 = out2 + bias.data
    out = out2.reshape(x.shape[:-1] + (weight.shape[1],))

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, bw)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None
    return _record(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no inputs")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: shapes {[t.shape for t in tensors]} differ off axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record(out, tensors, bw)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis for i in items)


def slice_(x: Tensor, index) -> Tensor:
    """Indexing; basic slices scatter back directly, advanced ones via add.at."""
    try:
        out = x.data[index]
    except IndexError as err:
        raise ShapeError(f"slice: {err} (shape {x.shape})") from None
    basic = _is_basic_index(index)

    def bw(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[index] += g
        else:
            np.add.at(gx, index, g)
        return (gx,)

    return _record(np.array(out, copy=True) if not basic else out, (x,), bw)


def pad_axis(x: Tensor, before: int, after: int, axis: int) -> Tensor:
    widths = [(0, 0)] * x.ndim
    widths[axis] = (before, after)
    out = np.pad(x.data, widths)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(before, before + x.shape[axis])
    idx = tuple(idx)
    return _record(out, (x,), lambda g: (g[idx],))


# ---------------------------------------------------------------------------
# reductions (accumulated in float64, cast back to the input dtype)
# ---------------------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = np.sum(x.data, axis=axes, dtype=np.float64, keepdims=keepdims).astype(x.dtype)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _record(np.asarray(out), (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean: empty reduction over axes {axes} of shape {x.shape}")
    out = np.mean(x.data, axis=axes, dtype=np.float64, keepdims=keepdims).astype(x.dtype)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).astype(x.dtype),)

    return _record(np.asarray(out), (x,), bw)


# ---------------------------------------------------------------------------
# normalisation and activations
# ---------------------------------------------------------------------------

def _check_axis(op: str, x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {x.shape}")
    axis %= x.ndim
    if x.shape[axis] == 0:
        raise ShapeError(f"{op}: empty axis {axis} in shape {x.shape}")
    return axis


def softmax(x: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``. Entries where ``mask`` is False get weight 0.

    Every slice along ``axis`` must keep at least one unmasked entry.
    """
    axis = _check_axis("softmax", x, axis)
    z = x.data.astype(np.float64)
    if mask is not None:
        mask = np.broadcast_to(mask, z.shape)
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = s.astype(x.dtype)

    def bw(g):
        return ((out * (g - np.sum(g * out, axis=axis, keepdims=True))).astype(x.dtype),)

    return _record(out, (x,), bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis("log_softmax", x, axis)
    z = x.data.astype(np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    out = (z - np.log(np.exp(z).sum(axis=axis, keepdims=True))).astype(x.dtype)

    def bw(g):
        return ((g - np.exp(out) * g.sum(axis=axis, keepdims=True)).astype(x.dtype),)

    return _record(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine pair."""
    _check_axis("layer_norm", x, -1)
    d = x.shape[-1]
    for p in (gamma, beta):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm: affine shape {p.shape} != ({d},)")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    xc = x64 - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat
    if gamma is not None:
        out = out * gamma.data
    if beta is not None:
        out = out + beta.data
    out = out.astype(x.dtype)

    def bw(g):
        g64 = g.astype(np.float64)
        gg = g64 * gamma.data if gamma is not None else g64
        gx = inv * (gg - gg.mean(axis=-1, keepdims=True)
                    - xhat * (gg * xhat).mean(axis=-1, keepdims=True))
        grads = [gx.astype(x.dtype)]
        lead = tuple(range(g.ndim - 1))
        if gamma is not None:
            grads.append((g64 * xhat).sum(axis=lead).astype(gamma.dtype))
        if beta is not None:
            grads.append(g64.sum(axis=lead).astype(beta.dtype))
        return tuple(grads)

    inputs = [x] + [p for p in (gamma, beta) if p is not None]
    return _record(out, inputs, bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """Inverted dropout; the Bernoulli keep-mask is captured for backward."""
    if not train or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout: train mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return _record(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# convolution and lookup
# ---------------------------------------------------------------------------

def conv_output_length(length: int, kernel: int, stride: int, padding) -> int:
    if padding == "same":
        return -(-length // stride)
    return (length + 2 * padding - kernel) // stride + 1


def _same_padding(length: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int | str = 0) -> Tensor:
    """Convolution over time for channel-last input.

    ``x`` is (B, L, C_in), ``weight`` is (K, C_in, C_out). ``padding`` is a
    symmetric zero-pad width or ``"same"``, which pads so that the output has
    ``ceil(L / stride)`` steps (extra pad frame goes on the right).
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[2] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {weight.shape}")
    if stride < 1:
        raise ShapeError(f"conv1d: stride must be >= 1, got {stride}")
    B, L, cin = x.shape
    K, _, cout = weight.shape
    left, right = _same_padding(L, K, stride) if padding == "same" else (padding, padding)
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0))) if left or right else x.data
    lout = (L + left + right - K) // stride + 1
    if lout < 1:
        raise ShapeError(f"conv1d: input length {L} too short for kernel {K}")
    idx = np.arange(lout)[:, None] * stride + np.arange(K)[None, :]
    cols = xp[:, idx, :].reshape(B * lout, K * cin)
    w2 = weight.data.reshape(K * cin, cout)
    out = cols @ w2
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, lout, cout)

    def bw(g):
        g2 = g.reshape(B * lout, cout)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ w2.T).reshape(B, lout, K, cin)
            gxp = np.zeros_like(xp)
            steps = np.arange(lout) * stride
            for k in range(K):
                gxp[:, steps + k, :] += gcols[:, :, k, :]
            gx = gxp[:, left:left + L, :]
        gw = (cols.T @ g2).reshape(weight.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _record(out, inputs, bw)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ShapeError(f"embedding: ids must be integers, got {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: ids out of range for table {table.shape}")

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _record(table.data[ids], (table,), bw)


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor) -> None:
    """Populate ``.grad`` of every requires-grad tensor that ``loss`` depends on."""
    if loss.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if tape.consumed:
        raise TapeError("tape was already differentiated; record a new forward pass")
    if not loss.requires_grad:
        raise TapeError("loss does not depend on any tensor that requires grad")
    if not any(node.out is loss for node in reversed(tape.nodes)):
        raise TapeError("loss was not recorded on this tape")
    tape.consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = np.array(gi, dtype=inp.dtype, copy=True)
            else:
                inp.grad += gi


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None

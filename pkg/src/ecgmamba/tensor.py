"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad=True`` appends a
:class:`Node` to the graph.  Nodes carry a monotonically increasing sequence
number, so sorting a node set by that number yields a topological order and
:func:`backward` simply walks it in reverse.
"""

from __future__ import annotations

import contextlib
import itertools
import math
import weakref
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
MAX_ELEMENTS = 2**48

_seq = itertools.count()
_grad_enabled = True
_recorders: list["Graph"] = []


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def make_rng(seed: int | np.random.Generator, stream: int = 0) -> np.random.Generator:
    """Seeded generator backed by Philox (a counter-based bit generator).

    Distinct ``stream`` values give independent sequences for the same seed.
    An existing generator is passed through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("seeded initialisation requires an explicit seed")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(eq=False)
class Node:
    op: str
    inputs: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    seq: int
    output: "weakref.ref[Tensor] | None" = None
    saved: dict = field(default_factory=dict)


@dataclass
class Graph:
    """Ordered record of the operations executed inside :func:`record`.

    Operations are recorded with or without gradient tracking, so inference
    under :func:`no_grad` can be inspected too.
    """

    entries: list[Node] = field(default_factory=list)

    def ops(self) -> list[str]:
        return [n.op for n in self.entries]


@contextlib.contextmanager
def record():
    graph = Graph()
    _recorders.append(graph)
    try:
        yield graph
    finally:
        _recorders.remove(graph)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("only single-element tensors can be converted to a scalar")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # operator sugar
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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def apply_op(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward, **saved) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and record it when tracking.

    ``backward`` maps the output gradient to one gradient per input (``None``
    for inputs that need none).  Returned gradients must already match the
    input shapes.
    """
    out = Tensor(data)
    tracking = _grad_enabled and any(t.requires_grad for t in inputs)
    if tracking or _recorders:
        node = Node(op, tuple(inputs), backward, next(_seq), weakref.ref(out), saved)
        if tracking:
            out.requires_grad = True
            out.node = node
        for graph in _recorders:
            graph.entries.append(node)
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every tracked leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not depend on any tensor that requires grad")
    if loss.node is None:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return

    nodes: dict[int, Node] = {}
    stack = [loss.node]
    while stack:
        node = stack.pop()
        if id(node) in nodes:
            continue
        nodes[id(node)] = node
        stack.extend(t.node for t in node.inputs if t.node is not None)

    grads: dict[int, np.ndarray] = {id(loss.node): np.ones_like(loss.data)}
    for node in sorted(nodes.values(), key=lambda n: n.seq, reverse=True):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            if t.node is None:
                t.grad = gi.copy() if t.grad is None else t.grad + gi
            else:
                key = id(t.node)
                grads[key] = gi if key not in grads else grads[key] + gi


# ---------------------------------------------------------------- creation


def _check_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"negative extent in shape {shape}")
    if math.prod(shape) > MAX_ELEMENTS:
        raise OverflowError(f"shape {shape} exceeds {MAX_ELEMENTS} elements")
    return shape


def create(
    shape,
    init: str = "zeros",
    *,
    value: float = 0.0,
    seed=None,
    low: float = -1.0,
    high: float = 1.0,
    mean: float = 0.0,
    std: float = 1.0,
    requires_grad: bool = False,
) -> Tensor:
    """Allocate a tensor filled according to ``init``.

    ``init`` is one of ``zeros``, ``constant``, ``uniform`` or ``normal``; the
    random variants need ``seed`` (an int or an existing generator).
    """
    shape = _check_shape(shape)
    if init == "zeros":
        data = np.zeros(shape)
    elif init == "constant":
        data = np.full(shape, float(value))
    elif init == "uniform":
        data = make_rng(seed).uniform(low, high, size=shape)
    elif init == "normal":
        data = make_rng(seed).normal(mean, std, size=shape)
    else:
        raise ValueError(f"unknown init {init!r}")
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad=False) -> Tensor:
    return create(shape, "zeros", requires_grad=requires_grad)


# ---------------------------------------------------------------- helpers


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(*shapes) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError:
        raise ShapeError(f"shapes {' and '.join(map(str, shapes))} do not broadcast") from None


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch-free and overflow-free
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return apply_op(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return apply_op(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a.shape, b.shape)
    return apply_op(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return apply_op("neg", -a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return apply_op("exp", out, (a,), lambda g: (g * out,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return apply_op("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    return apply_op("softplus", _softplus(a.data), (a,), lambda g: (g * _sigmoid(a.data),))


def silu(a) -> Tensor:
    a = as_tensor(a)
    s = _sigmoid(a.data)
    return apply_op("silu", a.data * s, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def elementwise(op: str, a, b=None) -> Tensor:
    """Dispatch by name: add, mul, sub, exp, silu, softplus, sigmoid, neg."""
    binary = {"add": add, "mul": mul, "sub": sub}
    unary = {"exp": exp, "silu": silu, "softplus": softplus, "sigmoid": sigmoid, "neg": neg}
    if op in binary:
        if b is None:
            raise ValueError(f"{op} needs two operands")
        return binary[op](a, b)
    if op in unary:
        return unary[op](a)
    raise ValueError(f"unknown elementwise op {op!r}")


def bce_with_logits(logits, targets) -> Tensor:
    """Per-element binary cross entropy on raw logits (targets are constants)."""
    z = as_tensor(logits)
    y = np.broadcast_to(as_tensor(targets).data, z.shape)
    loss = np.maximum(z.data, 0.0) - z.data * y + np.log1p(np.exp(-np.abs(z.data)))
    return apply_op("bce_with_logits", loss, (z,), lambda g: (g * (_sigmoid(z.data) - y),))


# ---------------------------------------------------------------- linear algebra


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching rules; 2-D operands are the plain case."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    _broadcast_shape(a.shape[:-2], b.shape[:-2])

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return apply_op("matmul", a.data @ b.data, (a, b), bw)


def conv1d(x, weight, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x[..., C_in, L]`` with ``weight[C_out, C_in, K]``.

    Output is ``[..., C_out, L_out]`` with
    ``L_out = (L + 2*padding - K) // stride + 1``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    c_out, c_in, k = weight.shape
    if x.ndim < 2 or x.shape[-2] != c_in:
        raise ShapeError(f"conv1d expects [..., {c_in}, L] input, got {x.shape}")
    length = x.shape[-1] + 2 * padding
    if length < k:
        raise ShapeError(f"conv1d input length {x.shape[-1]} (+2*{padding}) shorter than kernel {k}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    l_out = (length - k) // stride + 1

    xp = x.data
    if padding:
        xp = np.pad(xp, [(0, 0)] * (xp.ndim - 1) + [(padding, padding)])
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[..., ::stride, :]
    cols = np.ascontiguousarray(np.swapaxes(win, -3, -2)).reshape(*xp.shape[:-2], l_out, c_in * k)
    wmat = weight.data.reshape(c_out, c_in * k)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = np.swapaxes(out, -1, -2)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        gt = np.swapaxes(g, -1, -2)  # [..., L_out, C_out]
        gw = (gt.reshape(-1, c_out).T @ cols.reshape(-1, c_in * k)).reshape(weight.shape)
        gcols = (gt @ wmat).reshape(*gt.shape[:-1], c_in, k)
        gxp = np.zeros(xp.shape)
        span = stride * (l_out - 1) + 1
        for j in range(k):
            gxp[..., j : j + span : stride] += np.swapaxes(gcols[..., j], -1, -2)
        gx = gxp[..., padding : padding + x.shape[-1]] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(gt.reshape(-1, c_out).sum(axis=0))
        return grads

    return apply_op("conv1d", out, inputs, bw)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply ``gain`` and ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if d < 1:
        raise ShapeError("layer_norm over an empty axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd

    def bw(g):
        red = tuple(range(g.ndim - 1))
        dxhat = g * gain.data
        dx = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return apply_op("layer_norm", xhat * gain.data + bias.data, (x, gain, bias), bw)


# ---------------------------------------------------------------- shape ops


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)
    return apply_op("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return apply_op("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def getitem(x, idx) -> Tensor:
    """Basic (slice/int) indexing."""
    x = as_tensor(x)

    def bw(g):
        full = np.zeros(x.shape)
        full[idx] += g
        return (full,)

    return apply_op("slice", x.data[idx], (x,), bw)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]
    return apply_op("concat", out, ts, lambda g: np.split(g, bounds, axis=axis))


def flip(x, axis: int) -> Tensor:
    x = as_tensor(x)
    return apply_op("flip", np.flip(x.data, axis=axis).copy(), (x,), lambda g: (np.flip(g, axis=axis),))


def broadcast_to(x, shape) -> Tensor:
    x = as_tensor(x)
    _broadcast_shape(x.shape, tuple(shape))
    out = np.broadcast_to(x.data, shape).copy()
    return apply_op("broadcast", out, (x,), lambda g: (unbroadcast(g, x.shape),))


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return apply_op("sum", out, (x,), bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean(axis=axis, keepdims=keepdims)
    n = x.data.size // max(np.size(out), 1)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape),)

    return apply_op("mean", out, (x,), bw)


sum = sum_  # noqa: A001

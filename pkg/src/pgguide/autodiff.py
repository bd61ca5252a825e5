"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation whose inputs require gradients appends a node to the active
:class:`Graph`.  Nodes are only ever appended, so the list order is already a
topological order and :func:`backward` walks it in reverse once.

Tensors that do not require gradients (constants, or anything computed inside
:func:`no_grad`) skip graph recording entirely, which keeps inference cheap.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Graph:
    """Append-only list of ``(kind, inputs, output, vjp)`` nodes."""

    def __init__(self):
        self.nodes: list[tuple[str, tuple["Tensor", ...], "Tensor", Callable]] = []

    def record(self, kind, inputs, out, vjp):
        out.node = len(self.nodes)
        self.nodes.append((kind, inputs, out, vjp))

    def __len__(self):
        return len(self.nodes)


_state = {"graph": Graph(), "grad": True}


def current_graph() -> Graph:
    return _state["graph"]


@contextlib.contextmanager
def new_graph():
    """Run a forward pass on a fresh graph; yields the graph."""
    prev = _state["graph"]
    g = Graph()
    _state["graph"] = g
    try:
        yield g
    finally:
        _state["graph"] = prev


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "node", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def numpy(self):
        return self.value

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor) and other.size != 1:
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


def parameter(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _make(kind, value, inputs, vjp) -> Tensor:
    needs = _state["grad"] and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=needs)
    if needs:
        _state["graph"].record(kind, inputs, out, vjp)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _same_shape(kind, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra and structural ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _make("matmul", av @ bv, (a, b), vjp)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: no parts")
    if len(parts) == 1:
        return parts[0]
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", value, tuple(parts), vjp)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    value = x.value.reshape(shape)
    return _make("reshape", value, (x,), lambda g: (g.reshape(old),))


def take(x: Tensor, key) -> Tensor:
    """Basic or integer-array indexing; gradients scatter-add back."""
    value = x.value[key]
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, key, g)
        return (out,)

    return _make("take", np.array(value, dtype=np.float64), (x,), vjp)


def row(x: Tensor, i: int) -> Tensor:
    """Row ``i`` of a matrix as a 1 x k tensor."""
    value = x.value[i:i + 1]
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[i:i + 1] = g
        return (out,)

    return _make("row", value.copy(), (x,), vjp)


def cols(x: Tensor, start: int, stop: int) -> Tensor:
    value = x.value[:, start:stop]
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _make("cols", value.copy(), (x,), vjp)


def embed(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table``; repeated ids accumulate gradient."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embed: id out of range [0, {table.shape[0]})")
    shape = table.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, ids, g)
        return (out,)

    return _make("embed", table.value[ids], (table,), vjp)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("add", a, b)
    return _make("add", a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("sub", a, b)
    return _make("sub", a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return _make("mul", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(x, s) -> Tensor:
    """Multiply by a python scalar or a one-element tensor."""
    x = _as_tensor(x)
    if not isinstance(s, Tensor):
        c = float(s)
        return _make("scale", x.value * c, (x,), lambda g: (g * c,))
    if s.size != 1:
        raise ShapeError(f"scale: factor must have one element, got {s.shape}")
    xv, sv = x.value, s.value
    c = float(sv.reshape(-1)[0])
    sshape = s.shape

    def vjp(g):
        return g * c, np.full(sshape, float(np.sum(g * xv)))

    return _make("scale", xv * c, (x, s), vjp)


def one_minus(x: Tensor) -> Tensor:
    return _make("one_minus", 1.0 - x.value, (x,), lambda g: (-g,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    return _make("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.value)
    return _make("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def minimum(a, b) -> Tensor:
    """Elementwise min; at ties the whole gradient goes to ``a``."""
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape("min", a, b)
    first = a.value <= b.value

    def vjp(g):
        return np.where(first, g, 0.0), np.where(first, 0.0, g)

    return _make("min", np.where(first, a.value, b.value), (a, b), vjp)


def log(x: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log with the argument clamped at ``floor``."""
    v = x.value
    clamped = np.maximum(v, floor)

    def vjp(g):
        return (np.where(v > floor, g / clamped, 0.0),)

    return _make("log", np.log(clamped), (x,), vjp)


def total(x: Tensor) -> Tensor:
    """Sum of all entries as a 1 x 1 tensor."""
    shape = x.shape
    return _make("sum", np.array([[x.value.sum()]]), (x,),
                 lambda g: (np.full(shape, float(g.reshape(-1)[0])),))


def mean(parts: Sequence[Tensor]) -> Tensor:
    """Mean of a list of same-shape tensors."""
    acc = parts[0]
    for p in parts[1:]:
        acc = add(acc, p)
    return scale(acc, 1.0 / len(parts))


# ---------------------------------------------------------------------------
# softmax and the fused LSTM cell


def softmax(x: Tensor) -> Tensor:
    """Softmax along the last axis with max subtraction."""
    if x.size == 0:
        raise ValueError("softmax of empty input")
    v = x.value
    z = np.exp(v - v.max(axis=-1, keepdims=True))
    y = z / z.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make("softmax", y, (x,), vjp)


def lstm_cell(gates: Tensor, c_prev: Tensor) -> Tensor:
    """Apply LSTM gate nonlinearities to pre-activations.

    ``gates`` is 1 x 4H laid out as (input, forget, output, candidate);
    returns a 2 x H tensor whose rows are the new hidden and cell states.
    """
    hdim = c_prev.shape[1]
    if gates.shape != (1, 4 * hdim):
        raise ShapeError(f"lstm_cell: gates {gates.shape} vs cell {c_prev.shape}")
    z = gates.value[0]
    i = _sigmoid(z[:hdim])
    f = _sigmoid(z[hdim:2 * hdim])
    o = _sigmoid(z[2 * hdim:3 * hdim])
    u = np.tanh(z[3 * hdim:])
    cp = c_prev.value[0]
    c = f * cp + i * u
    tc = np.tanh(c)
    h = o * tc

    def vjp(g):
        gh, gc = g[0], g[1]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * u * i * (1.0 - i),
            dc * cp * f * (1.0 - f),
            gh * tc * o * (1.0 - o),
            dc * i * (1.0 - u * u),
        ])
        return dz[None, :], (dc * f)[None, :]

    return _make("lstm_cell", np.stack([h, c]), (gates, c_prev), vjp)


# ---------------------------------------------------------------------------
# backward pass and finite-difference checking


def backward(root: Tensor, params: Iterable[Tensor] = (), graph: Graph | None = None):
    """Populate ``.grad`` on everything reachable from a scalar ``root``.

    Parameters listed in ``params`` that the root does not depend on receive a
    zero gradient rather than ``None``.
    """
    if root.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    graph = graph if graph is not None else current_graph()
    params = list(params)
    for p in params:
        p.grad = None
    root.grad = np.ones(root.shape)
    if root.node is not None:
        nodes = graph.nodes[: root.node + 1]
        for _, inputs, _, _ in nodes:
            for t in inputs:
                if t.node is None and t.requires_grad:
                    t.grad = None
        for _, inputs, out, vjp in reversed(nodes):
            if out.grad is None:
                continue
            grads = vjp(out.grad)
            for t, g in zip(inputs, grads):
                if not t.requires_grad:
                    continue
                if t.grad is None:
                    t.grad = np.array(g, dtype=np.float64)
                else:
                    t.grad = t.grad + g
            if out.node is not None:
                out.grad = None
    for p in params:
        if p.grad is None:
            p.grad = np.zeros(p.shape)
    return params


def gradient_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                   eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must rebuild the forward pass from the current parameter values
    each call.  Relative error per entry is
    ``|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)``.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-6, 1e-3], got {eps}")
    with new_graph():
        loss = loss_fn()
        if not math.isfinite(loss.item()):
            raise FloatingPointError("non-finite loss")
        backward(loss, params)
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    with no_grad():
        for p, ag in zip(params, analytic):
            flat = p.value.reshape(-1)
            gflat = ag.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                up = loss_fn().item()
                flat[k] = orig - eps
                down = loss_fn().item()
                flat[k] = orig
                if not (math.isfinite(up) and math.isfinite(down)):
                    raise FloatingPointError("non-finite loss")
                num = (up - down) / (2.0 * eps)
                err = abs(gflat[k] - num) / max(abs(gflat[k]), abs(num), 1e-8)
                worst = max(worst, err)
    return worst

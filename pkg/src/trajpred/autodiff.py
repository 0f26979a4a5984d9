"""Minimal reverse-mode automatic differentiation over dense 2-D arrays.

Everything in the network is expressed with the primitives below. Arrays are
row-major float64 numpy matrices; a Tensor wraps one array together with the
graph edges needed for the backward pass. Gradients of leaf tensors accumulate
in place, so call :func:`zero_grad` between optimization steps.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to the rule of the requested op."""


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D value node in the computation graph.

    Leaf tensors created with ``requires_grad=True`` keep a zero-initialized
    ``grad`` buffer that :func:`backward` accumulates into. Intermediate nodes
    carry references to their parents and a closure that routes the upstream
    gradient to them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_matrix(data)
        self.requires_grad = requires_grad
        self.name = name
        self.parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple["Tensor", ...]) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.name = None
        out.parents = parents
        out._backward = None
        out.grad = None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"<{tag} {self.shape} requires_grad={self.requires_grad}>"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = np.zeros_like(t.data) if t.requires_grad else None


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar loss.

    Returns a map from each reachable ``requires_grad`` leaf to its gradient.
    Contributions from repeated use of a node sum; leaves not reachable from
    the loss keep their (zero-initialized) buffers untouched.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got shape {loss.shape}")

    # Iterative topological order over the requires_grad subgraph.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    if loss.grad is None:
        loss.grad = np.ones((1, 1))
    else:
        loss.grad += np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)

    grads: dict[Tensor, np.ndarray] = {}
    for node in order:
        if node.requires_grad and not node.parents and node.grad is not None:
            grads[node] = node.grad
    return grads


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out = Tensor._result(a.data @ b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        out._backward = _bw
    return out


def _broadcast_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    if a.shape[1] == b.shape[1] and (a.shape[0] == 1 or b.shape[0] == 1):
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} neither match nor row-broadcast")


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    return g.sum(axis=0, keepdims=True)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_pair(a, b, "add")
    out = Tensor._result(a.data + b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            _accum(a, _reduce_to(g, a.shape))
            _accum(b, _reduce_to(g, b.shape))
        out._backward = _bw
    return out


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_pair(a, b, "sub")
    out = Tensor._result(a.data - b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            _accum(a, _reduce_to(g, a.shape))
            _accum(b, -_reduce_to(g, b.shape))
        out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a single broadcast row."""
    a, b = _wrap(a), _wrap(b)
    _broadcast_pair(a, b, "elementwise-mul")
    out = Tensor._result(a.data * b.data, (a, b))
    if out.requires_grad:
        def _bw(g):
            _accum(a, _reduce_to(g * b.data, a.shape))
            _accum(b, _reduce_to(g * a.data, b.shape))
        out._backward = _bw
    return out


def scale(x, factor: float) -> Tensor:
    x = _wrap(x)
    out = Tensor._result(x.data * float(factor), (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * float(factor))
    return out


def concat_cols(*tensors) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if len(ts) < 2:
        raise ShapeError("concat-cols needs at least two inputs")
    rows = ts[0].shape[0]
    for t in ts[1:]:
        if t.shape[0] != rows:
            raise ShapeError(f"concat-cols: row counts differ, {[t.shape for t in ts]}")
    out = Tensor._result(np.concatenate([t.data for t in ts], axis=1), tuple(ts))
    if out.requires_grad:
        offsets = np.cumsum([0] + [t.shape[1] for t in ts])
        def _bw(g):
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                _accum(t, g[:, lo:hi])
        out._backward = _bw
    return out


def concat_rows(*tensors) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    if len(ts) < 2:
        raise ShapeError("concat-rows needs at least two inputs")
    cols = ts[0].shape[1]
    for t in ts[1:]:
        if t.shape[1] != cols:
            raise ShapeError(f"concat-rows: column counts differ, {[t.shape for t in ts]}")
    out = Tensor._result(np.concatenate([t.data for t in ts], axis=0), tuple(ts))
    if out.requires_grad:
        offsets = np.cumsum([0] + [t.shape[0] for t in ts])
        def _bw(g):
            for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
                _accum(t, g[lo:hi])
        out._backward = _bw
    return out


def slice_cols(x, start: int, stop: int) -> Tensor:
    x = _wrap(x)
    if not (0 <= start < stop <= x.shape[1]):
        raise ShapeError(f"slice-cols [{start}:{stop}] out of range for shape {x.shape}")
    out = Tensor._result(x.data[:, start:stop].copy(), (x,))
    if out.requires_grad:
        def _bw(g):
            full = np.zeros_like(x.data)
            full[:, start:stop] = g
            _accum(x, full)
        out._backward = _bw
    return out


def transpose(x) -> Tensor:
    x = _wrap(x)
    out = Tensor._result(x.data.T.copy(), (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g.T)
    return out


def gather_rows(x, index) -> Tensor:
    """out[r] = x[index[r]]; rows may repeat."""
    x = _wrap(x)
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather-rows: index out of range for {x.shape[0]} rows")
    out = Tensor._result(x.data[idx], (x,))
    if out.requires_grad:
        def _bw(g):
            full = np.zeros_like(x.data)
            np.add.at(full, idx, g)
            _accum(x, full)
        out._backward = _bw
    return out


def scatter_add_rows(x, index, num_rows: int) -> Tensor:
    """out[index[r]] += x[r] into a fresh (num_rows, C) matrix."""
    x = _wrap(x)
    idx = np.asarray(index, dtype=np.intp).reshape(-1)
    if idx.size != x.shape[0]:
        raise ShapeError(f"scatter-add-rows: {idx.size} indices for {x.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise ShapeError(f"scatter-add-rows: index out of range for {num_rows} rows")
    data = np.zeros((num_rows, x.shape[1]))
    np.add.at(data, idx, x.data)
    out = Tensor._result(data, (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g[idx])
    return out


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    y = _stable_sigmoid(x.data)
    out = Tensor._result(y, (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * y * (1.0 - y))
    return out


def tanh(x) -> Tensor:
    x = _wrap(x)
    y = np.tanh(x.data)
    out = Tensor._result(y, (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * (1.0 - y * y))
    return out


def softplus(x) -> Tensor:
    """ln(1 + e^x); returns x directly above 20 to stay finite."""
    x = _wrap(x)
    y = np.where(x.data > 20.0, x.data, np.log1p(np.exp(np.minimum(x.data, 20.0))))
    out = Tensor._result(y, (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * _stable_sigmoid(x.data))
    return out


def relu(x) -> Tensor:
    x = _wrap(x)
    out = Tensor._result(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * (x.data > 0.0))
    return out


def row_softmax(x) -> Tensor:
    """Softmax over each row, stabilized by subtracting the row max."""
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor._result(y, (x,))
    if out.requires_grad:
        def _bw(g):
            dot = (g * y).sum(axis=1, keepdims=True)
            _accum(x, y * (g - dot))
        out._backward = _bw
    return out


def sum_all(x) -> Tensor:
    x = _wrap(x)
    out = Tensor._result(np.array([[x.data.sum()]]), (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, np.full_like(x.data, g[0, 0]))
    return out


def mean_all(x) -> Tensor:
    x = _wrap(x)
    out = Tensor._result(np.array([[x.data.mean()]]), (x,))
    if out.requires_grad:
        n = x.data.size
        out._backward = lambda g: _accum(x, np.full_like(x.data, g[0, 0] / n))
    return out


def huber(x, beta: float = 1.0) -> Tensor:
    """Elementwise smooth-L1 kernel: x^2/(2*beta) inside the transition, |x| - beta/2 outside."""
    x = _wrap(x)
    beta = float(beta)
    ax = np.abs(x.data)
    y = np.where(ax < beta, 0.5 * x.data * x.data / beta, ax - 0.5 * beta)
    out = Tensor._result(y, (x,))
    if out.requires_grad:
        out._backward = lambda g: _accum(x, g * np.clip(x.data, -beta, beta) / beta)
    return out


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               *, training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Normalize each column over the rows of the batch, then apply scale/shift.

    ``running_mean``/``running_var`` are plain (1, C) arrays owned by the
    caller; they are updated in place with the batch's biased moments when
    ``training`` is true and are the sole source of statistics otherwise.
    """
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    c = x.shape[1]
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.shape != (1, c):
            raise ShapeError(f"batch-norm: {name} shape {t.shape} does not match (1, {c})")
    if training:
        mu = x.data.mean(axis=0, keepdims=True)
        var = x.data.var(axis=0, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    y = gamma.data * xhat + beta.data
    out = Tensor._result(y, (x, gamma, beta))
    if out.requires_grad:
        def _bw(g):
            _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
            _accum(beta, g.sum(axis=0, keepdims=True))
            if training:
                gm = g.mean(axis=0, keepdims=True)
                gx = (g * xhat).mean(axis=0, keepdims=True)
                _accum(x, gamma.data * inv_std * (g - gm - xhat * gx))
            else:
                _accum(x, gamma.data * inv_std * g)
        out._backward = _bw
    return out


def group_norm(x, gamma, beta, *, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize each row within contiguous channel groups, then scale/shift."""
    x, gamma, beta = _wrap(x), _wrap(gamma), _wrap(beta)
    n, c = x.shape
    if c % groups != 0:
        raise ShapeError(f"group-norm: {c} channels not divisible by {groups} groups")
    for name, t in (("gamma", gamma), ("beta", beta)):
        if t.shape != (1, c):
            raise ShapeError(f"group-norm: {name} shape {t.shape} does not match (1, {c})")
    xg = x.data.reshape(n, groups, c // groups)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv_std).reshape(n, c)
    y = gamma.data * xhat + beta.data
    out = Tensor._result(y, (x, gamma, beta))
    if out.requires_grad:
        def _bw(g):
            _accum(gamma, (g * xhat).sum(axis=0, keepdims=True))
            _accum(beta, g.sum(axis=0, keepdims=True))
            u = (g * gamma.data).reshape(n, groups, c // groups)
            xh = xhat.reshape(n, groups, c // groups)
            um = u.mean(axis=2, keepdims=True)
            ux = (u * xh).mean(axis=2, keepdims=True)
            _accum(x, (inv_std * (u - um - xh * ux)).reshape(n, c))
        out._backward = _bw
    return out


# The op set reachable through the generic dispatch surface.
PRIMITIVES: dict[str, Callable[..., Tensor]] = {
    "matmul": matmul,
    "add": add,
    "concat-cols": concat_cols,
    "elementwise-mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "softplus": softplus,
    "relu": relu,
    "row-softmax": row_softmax,
    "scale": scale,
}


def forward_primitive(op: str, inputs: list, **kwargs) -> Tensor:
    """Apply a named primitive to a list of tensors, recording the graph edge."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        known = ", ".join(sorted(PRIMITIVES))
        raise ValueError(f"unknown primitive {op!r}; known ops: {known}") from None
    return fn(*inputs, **kwargs)

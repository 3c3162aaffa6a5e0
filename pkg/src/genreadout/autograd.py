"""A small reverse-mode gradient engine over 2-D float arrays.

Only what the toy MPNN needs: rank-2 tensors, a handful of primitives, and
graph readouts delegated to the hand-derived kernels in :mod:`.readout`.
"""

from __future__ import annotations

from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy import sparse

from . import readout as rd


class ShapeError(ValueError):
    pass


class Value:
    """A node in the computation graph.

    ``backward_rule(grad)`` pushes ``grad`` (this node's accumulated
    gradient) into the ``grad`` of each parent.
    """

    __slots__ = ("data", "_grad", "parents", "backward_rule", "requires_grad", "name")

    def __init__(self, data, parents: Sequence["Value"] = (), backward_rule=None,
                 requires_grad: bool = False, name: str = ""):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        if data.ndim != 2:
            raise ShapeError(f"Value holds rank-2 data, got shape {data.shape}")
        self.data = data
        self._grad = None
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self._grad = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Value{label}(shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str = "") -> Value:
    return Value(data, requires_grad=True, name=name)


def constant(data) -> Value:
    return data if isinstance(data, Value) else Value(data)


class Tape:
    """Topologically ordered nodes of one forward pass (inputs first)."""

    def __init__(self, nodes: List[Value]):
        self.nodes = nodes

    @classmethod
    def record(cls, root: Value) -> "Tape":
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node.parents):
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)


def backward(loss: Value) -> Tape:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node."""
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.record(loss)
    loss.grad = loss.grad + 1.0
    for node in reversed(tape.nodes):
        if node.backward_rule is not None and node.requires_grad and node._grad is not None:
            node.backward_rule(node._grad)
    return tape


def zero_grad(params: Iterable[Value]) -> None:
    for p in params:
        p.zero_grad()


def _push(v: Value, g):
    if not v.requires_grad:
        return
    if v._grad is None:
        v._grad = np.array(g, dtype=np.float64).reshape(v.data.shape)
    else:
        v._grad += g


# ------------------------------------------------------------------ primitives

def matmul(a: Value, b: Value) -> Value:
    a, b = constant(a), constant(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")

    def rule(g):
        _push(a, g @ b.data.T)
        _push(b, a.data.T @ g)

    return Value(a.data @ b.data, (a, b), rule)


def add(a: Value, b: Value) -> Value:
    """Elementwise sum; ``b`` may also be a single row added to every row of ``a``."""
    a, b = constant(a), constant(b)
    if a.shape == b.shape:
        row = False
    elif b.shape == (1, a.shape[1]):
        row = True
    else:
        raise ShapeError(f"add {a.shape} + {b.shape}")

    def rule(g):
        _push(a, g)
        _push(b, g.sum(axis=0, keepdims=True) if row else g)

    return Value(a.data + b.data, (a, b), rule)


def mul(a: Value, b: Value) -> Value:
    a, b = constant(a), constant(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul {a.shape} * {b.shape}")

    def rule(g):
        _push(a, g * b.data)
        _push(b, g * a.data)

    return Value(a.data * b.data, (a, b), rule)


def relu(a: Value) -> Value:
    mask = a.data > 0

    def rule(g):
        _push(a, g * mask)

    return Value(np.where(mask, a.data, 0.0), (a,), rule)


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def softplus(a: Value) -> Value:
    def rule(g):
        _push(a, g * _sigmoid(a.data))

    return Value(np.logaddexp(0.0, a.data), (a,), rule)


def sigmoid(a: Value) -> Value:
    s = _sigmoid(a.data)

    def rule(g):
        _push(a, g * s * (1.0 - s))

    return Value(s, (a,), rule)


def sum(a: Value) -> Value:  # noqa: A001 - mirrors numpy naming
    def rule(g):
        _push(a, np.full_like(a.data, g[0, 0]))

    return Value(a.data.sum(), (a,), rule)


def mse(pred: Value, target) -> Value:
    target = constant(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def rule(g):
        _push(pred, g[0, 0] * 2.0 * diff / n)
        _push(target, -g[0, 0] * 2.0 * diff / n)

    return Value(np.mean(diff * diff), (pred, target), rule)


def bce_with_logits(logits: Value, target) -> Value:
    """Mean binary cross-entropy on raw logits."""
    target = constant(target)
    if logits.shape != target.shape:
        raise ShapeError(f"bce {logits.shape} vs {target.shape}")
    z, y = logits.data, target.data
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    n = z.size

    def rule(g):
        _push(logits, g[0, 0] * (_sigmoid(z) - y) / n)
        _push(target, -g[0, 0] * z / n)

    return Value(np.mean(loss), (logits, target), rule)


def concat(values: Sequence[Value]) -> Value:
    """Join along columns."""
    values = [constant(v) for v in values]
    rows = {v.shape[0] for v in values}
    if len(rows) != 1:
        raise ShapeError(f"concat row counts differ: {[v.shape for v in values]}")
    cuts = np.cumsum([v.shape[1] for v in values])[:-1]

    def rule(g):
        for v, part in zip(values, np.split(g, cuts, axis=1)):
            _push(v, part)

    return Value(np.concatenate([v.data for v in values], axis=1), values, rule)


def _incidence(index, num_rows):
    # row r sums the inputs k with index[k] == r, in ascending k
    k = len(index)
    return sparse.csr_matrix((np.ones(k), (index, np.arange(k))), shape=(num_rows, k))


def gather_rows(a: Value, index) -> Value:
    index = np.asarray(index, dtype=np.int64)

    def rule(g):
        if a.requires_grad:
            _push(a, _incidence(index, a.shape[0]) @ g)

    return Value(a.data[index], (a,), rule)


def scatter_add_rows(a: Value, index, num_rows: int) -> Value:
    """``out[index[k]] += a[k]``; rows never indexed stay zero."""
    index = np.asarray(index, dtype=np.int64)
    if len(index) != a.shape[0]:
        raise ShapeError("one target row per input row required")
    if len(index) and (index.min() < 0 or index.max() >= num_rows):
        raise ShapeError("scatter index out of range")
    out = _incidence(index, num_rows) @ a.data

    def rule(g):
        _push(a, g[index])

    return Value(out, (a,), rule)


def readout_primitive(features: Value, offsets, family, beta: Value, p: Value) -> Value:
    """Generalized readout over graph segments as a differentiable op.

    ``beta`` and ``p`` are ``(1, 1)`` Values; they only collect gradients
    when they require them.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    family = rd.Family(family)
    b, q = beta.item(), p.item()
    if family is rd.Family.SOFTMAX:
        out, ctx = rd.softmax_forward(features.data, offsets, b, q)
        backward_fn = rd.softmax_backward
    else:
        out, ctx = rd.powermean_forward(features.data, offsets, b, q)
        backward_fn = rd.powermean_backward

    def rule(g):
        d_x, d_beta, d_p = backward_fn(ctx, g)
        _push(features, d_x)
        _push(beta, d_beta)
        _push(p, d_p)

    return Value(out, (features, beta, p), rule)


def classic_readout_primitive(features: Value, offsets, kind) -> Value:
    offsets = np.asarray(offsets, dtype=np.int64)
    out = rd.classic_forward(features.data, offsets, kind)

    def rule(g):
        _push(features, rd.classic_backward(features.data, offsets, kind, g))

    return Value(out, (features,), rule)


# ------------------------------------------------------------------- gradcheck

def numerical_grad(fn: Callable[..., Value], inputs: Sequence[np.ndarray], which: int,
                   h: float = 1e-6) -> np.ndarray:
    """Central differences of ``fn(*inputs).data.sum()`` w.r.t. ``inputs[which]``."""
    base = [np.array(x, dtype=np.float64) for x in inputs]
    out = np.zeros_like(base[which])
    for idx in np.ndindex(out.shape):
        plus = [x.copy() for x in base]
        minus = [x.copy() for x in base]
        plus[which][idx] += h
        minus[which][idx] -= h
        f_plus = fn(*[Value(x) for x in plus]).data
        f_minus = fn(*[Value(x) for x in minus]).data
        out[idx] = np.sum(f_plus - f_minus) / (2 * h)
    return out


def analytic_grads(fn: Callable[..., Value], inputs: Sequence[np.ndarray]) -> List[np.ndarray]:
    params = [parameter(np.array(x, dtype=np.float64)) for x in inputs]
    out = fn(*params)
    backward(sum(out) if out.shape != (1, 1) else out)
    return [p.grad for p in params]


def gradcheck(fn: Callable[..., Value], inputs: Sequence[np.ndarray], h: float = 1e-6,
              rtol: float = 1e-6, atol: float = 1e-8, skip: Optional[Sequence[int]] = None) -> float:
    """Largest relative error between analytic and numerical gradients.

    Raises AssertionError when any entry misses both ``rtol`` and ``atol``.
    """
    grads = analytic_grads(fn, inputs)
    worst = 0.0
    for i, g in enumerate(grads):
        if skip and i in skip:
            continue
        num = numerical_grad(fn, inputs, i, h)
        err = np.abs(g - num)
        rel = err / np.maximum(np.abs(num), 1e-300)
        ok = (err <= atol) | (rel <= rtol)
        if not np.all(ok):
            raise AssertionError(f"input {i}: max abs err {err.max():.3e}, max rel err {rel[~ok].max():.3e}")
        worst = max(worst, float(np.max(np.where(err <= atol, 0.0, rel), initial=0.0)))
    return worst

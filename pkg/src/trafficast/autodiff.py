"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Every operation records its inputs and a local-gradient closure on the
output tensor; ``backward`` builds the tape (a topological ordering of the
recorded operations), walks it exactly once, and returns gradients for all
tensors that require them. Broadcasting is deliberately restricted to
bias-vector addition over the leading batch dimension so that every
gradient rule stays small and checkable against finite differences.

Tensors are treated as immutable once used in an operation; training steps
produce fresh arrays via ``adam_step`` and wrap them in new tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ShapeError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple["Tensor", ...] = ()
        self._backward = None  # closure: out_grad -> [(parent, parent_grad), ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # sugar used by the model code; each bottoms out in a primitive op
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def slice(self, axis: int, start: int, stop: int) -> "Tensor":
        return narrow(self, axis, start, stop)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    for p in parents:
        if p.requires_grad:
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            break
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return _make(data, (a, b), backward)


def add(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    bias_add = (
        a.data.ndim == 2
        and b.data.ndim in (1, 2)
        and b.data.shape[-1] == a.data.shape[1]
        and (b.data.ndim == 1 or b.data.shape[0] == 1)
    )
    if a.data.shape != b.data.shape and not bias_add:
        raise ShapeError(f"add shapes incompatible: {a.shape} + {b.shape}")
    data = a.data + b.data

    def backward(g):
        gb = g
        if bias_add and b.data.shape != g.shape:
            gb = g.sum(axis=0).reshape(b.data.shape)
        return [(a, g), (b, gb)]

    return _make(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    scalar = a.data.ndim == 0 or b.data.ndim == 0
    if not scalar and a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes incompatible: {a.shape} * {b.shape}")
    data = a.data * b.data

    def backward(g):
        ga = g * b.data
        gb = g * a.data
        if a.data.ndim == 0:
            ga = np.asarray(ga.sum())
        if b.data.ndim == 0:
            gb = np.asarray(gb.sum())
        return [(a, ga), (b, gb)]

    return _make(data, (a, b), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = expit(x.data)

    def backward(g):
        return [(x, g * data * (1.0 - data))]

    return _make(data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.tanh(x.data)

    def backward(g):
        return [(x, g * (1.0 - data * data))]

    return _make(data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return [(x, data * (g - inner))]

    return _make(data, (x,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = [0]
    for t in tensors:
        offsets.append(offsets[-1] + t.data.shape[axis])

    def backward(g):
        pieces = []
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            pieces.append((t, g[tuple(index)]))
        return pieces

    return _make(data, tuple(tensors), backward)


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    data = x.data[index]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return [(x, gx)]

    return _make(data, (x,), backward)


def mean(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.asarray(x.data.mean())

    def backward(g):
        return [(x, np.full_like(x.data, float(g) / x.data.size))]

    return _make(data, (x,), backward)


def sum_squares(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.asarray(float(np.dot(x.data.ravel(), x.data.ravel())))

    def backward(g):
        return [(x, 2.0 * float(g) * x.data)]

    return _make(data, (x,), backward)


def weighted_sum(weights: Tensor, states: list[Tensor]) -> Tensor:
    """Per-row convex combination of state rows: sum_s w[:, s] * states[s].

    ``weights`` is (batch, S); each state is (batch, H). Used for attention
    context vectors without needing general broadcasting.
    """
    weights = _as_tensor(weights)
    states = [_as_tensor(s) for s in states]
    if weights.data.ndim != 2 or weights.data.shape[1] != len(states):
        raise ShapeError(
            f"weights {weights.shape} must have one column per state ({len(states)})"
        )
    for s in states:
        if s.data.shape[0] != weights.data.shape[0]:
            raise ShapeError("state batch size differs from weights")
    data = np.zeros_like(states[0].data)
    for s_idx, s in enumerate(states):
        data += weights.data[:, s_idx : s_idx + 1] * s.data

    def backward(g):
        grads = []
        gw = np.empty_like(weights.data)
        for s_idx, s in enumerate(states):
            gw[:, s_idx] = (g * s.data).sum(axis=1)
            grads.append((s, weights.data[:, s_idx : s_idx + 1] * g))
        grads.append((weights, gw))
        return grads

    return _make(data, tuple(states) + (weights,), backward)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar loss for every tensor requiring them.

    The tape is the topological ordering of recorded operations; each is
    visited exactly once. Shared subexpressions accumulate (sum) their
    gradients. Tensors with ``requires_grad=False`` never appear in the
    result.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = _toposort(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    by_id: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(tape):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, pg in node._backward(g):
            if not parent.requires_grad:
                continue
            pid = id(parent)
            by_id[pid] = parent
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    result = {
        by_id[tid]: g for tid, g in grads.items() if by_id[tid].requires_grad
    }
    for tensor, g in result.items():
        tensor.grad = g
    return result


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns new arrays, mutates state.

    Parameters without an entry in ``grads`` are carried over unchanged
    (their moments still decay).
    """
    state.t += 1
    t = state.t
    out: dict[str, np.ndarray] = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(value)
        elif g.shape != value.shape:
            raise ShapeError(f"gradient shape {g.shape} != param shape {value.shape} for {name}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = beta1 * m + (1 - beta1) * g if m is not None else (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g if v is not None else (1 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        out[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out

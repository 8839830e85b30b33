"""Dense-matrix reverse-mode differentiation on float64 numpy arrays.

Every value in the computation graph is a 2-D float64 matrix (vectors are
1xk or kx1). A ``Node`` wraps one matrix together with the closure that
propagates its adjoint to its parents; ``backward`` runs the reverse sweep
from a 1x1 root. ``finite_diff_check`` is the independent verification
route: central differences over every parameter coordinate.

Conventions fixed here so results are reproducible bit for bit:
relu'(0) = 0, softmax subtracts the row max before exponentiating, and
gradient-check relative error is |a-n| / max(|a|, |n|, 1e-8).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, ShapeError

Matrix = np.ndarray  # always 2-D, float64, C-order


def as_matrix(x) -> Matrix:
    """Coerce scalars / nested lists / arrays to a 2-D float64 matrix."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    elif a.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {a.shape}")
    return np.ascontiguousarray(a)


def _unbroadcast(grad: Matrix, shape: tuple[int, int]) -> Matrix:
    """Sum an upstream gradient back down to the shape it was broadcast from."""
    if grad.shape == shape:
        return grad
    g = grad
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


class Node:
    """One value in the computation graph: a matrix plus its adjoint slot.

    ``parents`` and ``_push`` encode the graph edges; leaves have neither.
    The adjoint ``grad`` is allocated by :func:`backward` and has the same
    shape as ``value``.
    """

    __slots__ = ("value", "grad", "parents", "_push", "op")

    def __init__(self, value, parents: tuple = (), push: Callable[[Matrix], None] | None = None,
                 op: str = "leaf"):
        self.value = as_matrix(value)
        self.grad: Matrix | None = None
        self.parents = parents
        self._push = push
        self.op = op

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 matrix, got {self.value.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape})"

    # -- operator sugar -------------------------------------------------

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __matmul__(self, other):
        return matmul(self, _lift(other))

    def __neg__(self):
        return mul(self, _lift(-1.0))

    @property
    def T(self) -> "Node":
        return transpose(self)


def _lift(x) -> Node:
    return x if isinstance(x, Node) else Node(x, op="const")


# -- elementwise and structural operations ------------------------------


def add(a: Node, b: Node) -> Node:
    value = a.value + b.value

    def push(g: Matrix):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad += _unbroadcast(g, b.value.shape)

    return Node(value, (a, b), push, "add")


def sub(a: Node, b: Node) -> Node:
    value = a.value - b.value

    def push(g: Matrix):
        a.grad += _unbroadcast(g, a.value.shape)
        b.grad -= _unbroadcast(g, b.value.shape)

    return Node(value, (a, b), push, "sub")


def mul(a: Node, b: Node) -> Node:
    value = a.value * b.value

    def push(g: Matrix):
        a.grad += _unbroadcast(g * b.value, a.value.shape)
        b.grad += _unbroadcast(g * a.value, b.value.shape)

    return Node(value, (a, b), push, "mul")


def matmul(a: Node, b: Node) -> Node:
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(
            f"matmul dimension mismatch: {a.value.shape} x {b.value.shape}")
    value = a.value @ b.value

    def push(g: Matrix):
        a.grad += g @ b.value.T
        b.grad += a.value.T @ g

    return Node(value, (a, b), push, "matmul")


def transpose(a: Node) -> Node:
    value = np.ascontiguousarray(a.value.T)

    def push(g: Matrix):
        a.grad += g.T

    return Node(value, (a,), push, "transpose")


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)

    def push(g: Matrix):
        a.grad += (1.0 - t * t) * g

    return Node(t, (a,), push, "tanh")


def _sigmoid(x: Matrix) -> Matrix:
    # Split on sign so neither branch exponentiates a large positive number.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Node) -> Node:
    s = _sigmoid(a.value)

    def push(g: Matrix):
        a.grad += s * (1.0 - s) * g

    return Node(s, (a,), push, "sigmoid")


def relu(a: Node) -> Node:
    mask = a.value > 0.0  # derivative at exactly 0 is 0
    value = np.where(mask, a.value, 0.0)

    def push(g: Matrix):
        a.grad += mask * g

    return Node(value, (a,), push, "relu")


def activation(x, kind: str) -> Node:
    """Elementwise nonlinearity; ``kind`` is one of tanh / sigmoid / relu."""
    x = _lift(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation kind {kind!r}")


def softmax_rows(a: Node) -> Node:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=1, keepdims=True)

    def push(g: Matrix):
        a.grad += p * (g - (g * p).sum(axis=1, keepdims=True))

    return Node(p, (a,), push, "softmax_rows")


def log_softmax_rows(a: Node) -> Node:
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    value = shifted - lse
    p = np.exp(value)

    def push(g: Matrix):
        a.grad += g - p * g.sum(axis=1, keepdims=True)

    return Node(value, (a,), push, "log_softmax_rows")


def sum_all(a: Node) -> Node:
    value = np.array([[a.value.sum()]])

    def push(g: Matrix):
        a.grad += g[0, 0]

    return Node(value, (a,), push, "sum_all")


def sum_rows(a: Node) -> Node:
    """Row sums, shape (k, 1)."""
    value = a.value.sum(axis=1, keepdims=True)

    def push(g: Matrix):
        a.grad += g  # broadcasts across the row

    return Node(value, (a,), push, "sum_rows")


def powf(a: Node, exponent: float) -> Node:
    value = a.value ** exponent

    def push(g: Matrix):
        a.grad += exponent * a.value ** (exponent - 1.0) * g

    return Node(value, (a,), push, f"powf({exponent})")


def concat_rows(parts: Sequence[Node]) -> Node:
    parts = list(parts)
    value = np.vstack([p.value for p in parts])
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def push(g: Matrix):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            p.grad += g[lo:hi]

    return Node(value, tuple(parts), push, "concat_rows")


def concat_cols(a: Node, b: Node) -> Node:
    value = np.hstack([a.value, b.value])
    split = a.value.shape[1]

    def push(g: Matrix):
        a.grad += g[:, :split]
        b.grad += g[:, split:]

    return Node(value, (a, b), push, "concat_cols")


def slice_rows(a: Node, start: int, stop: int) -> Node:
    value = a.value[start:stop].copy()

    def push(g: Matrix):
        a.grad[start:stop] += g

    return Node(value, (a,), push, "slice_rows")


def slice_cols(a: Node, start: int, stop: int) -> Node:
    value = np.ascontiguousarray(a.value[:, start:stop])

    def push(g: Matrix):
        a.grad[:, start:stop] += g

    return Node(value, (a,), push, "slice_cols")


def gather_rows(a: Node, indices: Sequence[int]) -> Node:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows needs a flat index list")
    value = a.value[idx].copy()

    def push(g: Matrix):
        np.add.at(a.grad, idx, g)

    return Node(value, (a,), push, "gather_rows")


def pick_per_row(a: Node, cols: Sequence[int]) -> Node:
    """Select one entry per row; result is (k, 1)."""
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.value.shape[0])
    if cols.shape != rows.shape:
        raise ShapeError(
            f"need one column index per row: {len(cols)} vs {a.value.shape[0]}")
    value = a.value[rows, cols].reshape(-1, 1)

    def push(g: Matrix):
        np.add.at(a.grad, (rows, cols), g[:, 0])

    return Node(value, (a,), push, "pick_per_row")


def clip_unit(a: Node) -> Node:
    """Clamp into [-1, 1]; gradient passes only through the open interior."""
    value = np.clip(a.value, -1.0, 1.0)
    interior = (a.value > -1.0) & (a.value < 1.0)

    def push(g: Matrix):
        a.grad += interior * g

    return Node(value, (a,), push, "clip_unit")


# -- reverse sweep -------------------------------------------------------


def backward(root: Node) -> None:
    """Populate ``grad`` on every node reachable from a scalar root."""
    if root.value.shape != (1, 1):
        raise ContractError(
            f"backward needs a scalar (1x1) root, got shape {root.value.shape}")
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad[0, 0] = 1.0
    for node in reversed(order):
        if node._push is not None:
            node._push(node.grad)


# -- plain-number helpers -------------------------------------------------


def cosine(u, v) -> float:
    """Cosine similarity of two equal-length vectors, clamped into [-1, 1]."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"cosine needs equal lengths: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector is undefined")
    return float(min(1.0, max(-1.0, float(u @ v) / (nu * nv))))


def normalize_rows(a: Node, eps: float = 1e-12) -> Node:
    """Scale each row to (near-)unit norm; safe on all-zero rows."""
    normsq = sum_rows(mul(a, a))
    inv = powf(add(normsq, _lift(eps * eps)), -0.5)
    return mul(a, inv)


def layer_norm_rows(a: Node, eps: float = 1e-6) -> Node:
    """Standardize each row to zero mean and unit variance (no learned gain)."""
    width = a.value.shape[1]
    mean = sum_rows(a) * (1.0 / width)
    centered = sub(a, mean)
    var = sum_rows(mul(centered, centered)) * (1.0 / width)
    inv = powf(add(var, _lift(eps)), -0.5)
    return mul(centered, inv)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def finite_diff_check(f: Callable[[], Node], params: Iterable[Node],
                      step: float = 1e-5) -> float:
    """Worst relative error between backward() adjoints and central differences.

    ``f`` rebuilds the scalar loss graph from the current values of
    ``params`` on every call; parameter entries are perturbed in place.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    named = [(f"p{i}", p) for i, p in enumerate(params)]
    return max(finite_diff_by_param(f, named, step).values(), default=0.0)


def finite_diff_by_param(f: Callable[[], Node], named_params: Sequence[tuple[str, Node]],
                         step: float = 1e-5) -> dict[str, float]:
    """Per-parameter worst relative error of adjoints vs central differences."""
    for _, p in named_params:
        p.grad = None
    root = f()
    backward(root)
    analytic = {name: (np.zeros_like(p.value) if p.grad is None else p.grad.copy())
                for name, p in named_params}
    worst = {name: 0.0 for name, _ in named_params}
    for name, p in named_params:
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f().item()
            flat[i] = orig - step
            f_minus = f().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            err = relative_error(a, numeric)
            if err > worst[name]:
                worst[name] = err
    return worst

"""Dense float64 tensors with a recording tape for reverse-mode gradients.

Operations record themselves on the innermost active :class:`Tape` whenever
at least one input requires a gradient. Outside a tape every op is a plain
numpy computation, which is how evaluation runs.

    >>> w = Tensor(np.ones((2, 2)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(w)
    >>> gradients(tape, loss)[id(w)]
    array([[1., 1.],
           [1., 1.]])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

_ACTIVE_TAPES: list["Tape"] = []


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered record of operations. Nodes are appended in execution order,
    so the list is already topologically sorted."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"non-finite value produced by {op}")
    tape = _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=track)
    if track:
        tape.nodes.append(Node(op, inputs, out, backward))
    return out


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 2 and b.ndim == 2 and a.shape[1] == b.shape[0],
           f"matmul shapes {a.shape} and {b.shape}")
    return _result("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum. ``b`` may also be a 1-D bias matching ``a``'s last axis."""
    if a.shape == b.shape:
        return _result("add", a.data + b.data, (a, b), lambda g: (g, g))
    _check(b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0],
           f"add shapes {a.shape} and {b.shape}")
    d = b.shape[0]
    return _result("add_bias", a.data + b.data, (a, b),
                   lambda g: (g, g.reshape(-1, d).sum(axis=0)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"sub shapes {a.shape} and {b.shape}")
    return _result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"mul shapes {a.shape} and {b.shape}")
    return _result("mul", a.data * b.data, (a, b),
                   lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    return _result("scale", a.data * c, (a,), lambda g: (g * c,))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    _check(len(tensors) > 0, "concat of nothing")
    ndim = tensors[0].ndim
    ax = axis % ndim
    for t in tensors:
        _check(t.ndim == ndim and all(t.shape[i] == tensors[0].shape[i]
                                      for i in range(ndim) if i != ax),
               f"concat shapes {[t.shape for t in tensors]} on axis {axis}")
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return np.split(g, bounds, axis=ax)

    return _result("concat", np.concatenate([t.data for t in tensors], axis=ax),
                   tensors, backward)


def slice_(a: Tensor, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    out = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _result("slice", np.array(out, copy=True), (a,), backward)


def gather(a: Tensor, index) -> Tensor:
    """Rows of ``a`` at integer ``index`` (any shape); repeats allowed."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index.reshape(-1), g.reshape((-1,) + a.shape[1:]))
        return (full,)

    return _result("gather", a.data[index], (a,), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    return _result("reshape", a.data.reshape(shape), (a,),
                   lambda g: (g.reshape(a.shape),))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return _result("relu", np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


def cos(a: Tensor) -> Tensor:
    return _result("cos", np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(a.data)
    return _result("log", y, (a,), lambda g: (g / a.data,))


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(a)) without underflow for large negative inputs."""
    y = -np.logaddexp(0.0, -a.data)
    return _result("log_sigmoid", y, (a,),
                   lambda g: (g * 0.5 * (1.0 - np.tanh(0.5 * a.data)),))


def softmax(a: Tensor, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax along ``axis``. Entries where ``mask`` is False get weight 0;
    a slice with no real entries comes out all zeros."""
    x = a.data
    if mask is None:
        mask = np.ones(x.shape, dtype=bool)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    top = np.max(np.where(mask, x, -np.inf), axis=axis, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(mask, np.exp(np.where(mask, x - top, 0.0)), 0.0)
    total = e.sum(axis=axis, keepdims=True)
    y = np.divide(e, total, out=np.zeros_like(e), where=total > 0)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return _result("softmax", y, (a,), backward)


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return _result("sum", np.asarray(a.data.sum(axis=axis)), (a,), backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis), 1.0 / n)


def dot(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 1 and a.shape == b.shape, f"dot shapes {a.shape} and {b.shape}")
    return _result("dot", np.asarray(a.data @ b.data), (a, b),
                   lambda g: (g * b.data, g * a.data))


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    _check(a.ndim == 1 and a.shape == b.shape, f"cosine shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a.data), np.linalg.norm(b.data)
    _check(na > 0 and nb > 0, "cosine similarity of a zero vector")
    c = float(a.data @ b.data) / (na * nb)

    def backward(g):
        return (g * (b.data / (na * nb) - c * a.data / na**2),
                g * (a.data / (na * nb) - c * b.data / nb**2))

    return _result("cosine", np.asarray(c), (a, b), backward)


def einsum(subscripts: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum. Every index of an operand must appear in the other
    operand or in the output, which keeps both gradients expressible as
    einsums."""
    ins, out = subscripts.replace(" ", "").split("->")
    sa, sb = ins.split(",")
    for own, other in ((sa, sb), (sb, sa)):
        _check(all(c in other or c in out for c in own),
               f"einsum index set {subscripts!r} unsupported")

    def backward(g):
        return (np.einsum(f"{out},{sb}->{sa}", g, b.data),
                np.einsum(f"{out},{sa}->{sb}", g, a.data))

    return _result("einsum", np.einsum(subscripts, a.data, b.data), (a, b), backward)


# ---------------------------------------------------------------------------
# reverse pass


def gradients(tape: Tape, loss: Tensor) -> dict[int, np.ndarray]:
    """Gradient of ``loss`` for every tensor on the tape, keyed by ``id``.

    The tape is left untouched, so calling this twice gives the same result.
    """
    if loss.data.size != 1:
        raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
    if not any(node.output is loss for node in tape.nodes):
        raise ValueError("loss was not produced on this tape")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node.output))
        if g is None:
            continue
        for t, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            grads[key] = grads[key] + gi if key in grads else np.asarray(gi, dtype=np.float64)
    return grads


def backward(tape: Tape, loss: Tensor, params) -> dict[str, np.ndarray]:
    """Gradients of ``loss`` keyed by parameter name; parameters that did not
    take part in the loss get zeros."""
    raw = gradients(tape, loss)
    return {name: raw.get(id(p), np.zeros_like(p.data)).reshape(p.shape)
            for name, p in params.items()}


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    x = Tensor(x.data.copy(), requires_grad=True)
    with Tape() as tape:
        y = f(x)
    analytic = gradients(tape, y).get(id(x), np.zeros_like(x.data))
    flat = x.data.reshape(-1)
    worst = 0.0
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + h
        up = float(f(Tensor(x.data)).data)
        flat[k] = keep - h
        down = float(f(Tensor(x.data)).data)
        flat[k] = keep
        numeric = (up - down) / (2 * h)
        a = analytic.reshape(-1)[k]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def stack_rows(rows: Iterable[Tensor]) -> Tensor:
    rows = [reshape(r, (1,) + r.shape) for r in rows]
    return concat(rows, axis=0)

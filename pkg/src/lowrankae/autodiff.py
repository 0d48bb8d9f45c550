"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: exactly the operations needed to express dense
encoder/decoder stacks, their training losses, and a probe head. The
graph is rebuilt on every forward pass; calling ``backward()`` on a
scalar fills the ``grad`` buffer of every reachable tensor that
requires gradients, accumulating additively when a tensor feeds several
consumers.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

__all__ = [
    "Tensor",
    "add",
    "cross_entropy",
    "matmul",
    "mse",
    "mul",
    "relu",
    "row_blocked_matmul",
    "scale",
    "sub",
    "tanh",
    "tensor_sum",
    "transpose",
]

# Left operands are processed in fixed-size row blocks (zero-padded at the
# tail) before hitting BLAS, so each output row depends only on that row's
# content and the right operand. A batched forward pass is then bitwise
# equal to the concatenation of per-sample forward passes.
_ROW_BLOCK = 32


def row_blocked_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` with row results independent of the number of rows in ``a``."""
    n = a.shape[0]
    if n == _ROW_BLOCK:
        return a @ b
    out = np.empty((n, b.shape[1]), dtype=np.float64)
    for start in range(0, n, _ROW_BLOCK):
        block = a[start : start + _ROW_BLOCK]
        if block.shape[0] == _ROW_BLOCK:
            out[start : start + _ROW_BLOCK] = block @ b
        else:
            padded = np.zeros((_ROW_BLOCK, a.shape[1]), dtype=np.float64)
            padded[: block.shape[0]] = block
            out[start : start + _ROW_BLOCK] = (padded @ b)[: block.shape[0]]
    return out


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    Leaves are created directly; non-leaf tensors come out of the
    operations below and remember how to push gradients to their
    parents. ``data`` is treated as immutable once the tensor takes
    part in a graph; only ``grad`` mutates.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.data = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar loss.

        The graph is visited in reverse topological order; parents are
        expanded in op-argument order, so the schedule (and therefore
        the result) is deterministic for a given graph.
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in reversed(node._parents):
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, delta: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += delta


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-d bias added to every row of a matrix."""
    bias = a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]
    if not bias and a.data.shape != b.data.shape:
        raise ShapeError(f"add: incompatible shapes {a.data.shape} and {b.data.shape}")

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g.sum(axis=0) if bias else g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub: incompatible shapes {a.data.shape} and {b.data.shape}")

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: incompatible shapes {a.data.shape} and {b.data.shape}")

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * c)

    return _result(a.data * c, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul: expected matrices, got shapes {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions differ for {a.data.shape} and {b.data.shape}"
        )

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(row_blocked_matmul(a.data, b.data), (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return _result(a.data.T, (a,), backward)


def relu(a: Tensor) -> Tensor:
    """Elementwise max(0, x); the subgradient at 0 is taken as 0."""
    mask = a.data > 0

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * mask)

    return _result(np.maximum(a.data, 0.0), (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _result(out_data, (a,), backward)


def tensor_sum(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accumulate(a, np.broadcast_to(g, a.data.shape))

    return _result(np.asarray(np.sum(a.data)), (a,), backward)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Sum of squared elementwise differences (a scalar)."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mse: incompatible shapes {a.data.shape} and {b.data.shape}")
    diff = a.data - b.data

    def backward(g: np.ndarray) -> None:
        _accumulate(a, (2.0 * g) * diff)
        _accumulate(b, (-2.0 * g) * diff)

    return _result(np.asarray(np.sum(diff * diff)), (a, b), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of integer ``labels`` against logit rows."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: expected a logit matrix, got {logits.data.shape}")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"cross_entropy: labels shape {labels.shape} does not match "
            f"batch size {logits.data.shape[0]}"
        )
    n = logits.data.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    value = -log_probs[np.arange(n), labels].mean()

    def backward(g: np.ndarray) -> None:
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        _accumulate(logits, (g / n) * grad)

    return _result(np.asarray(value), (logits,), backward)

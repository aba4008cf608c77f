"""Reverse-mode automatic differentiation over dense 2-D float64 arrays.

A dynamically recorded tape in the micrograd tradition, except that each
node carries a whole (rows, cols) numpy array instead of one scalar, so a
full MLP layer or message-passing step is a handful of tape nodes rather
than thousands.  Every operation returns a new :class:`Tensor` holding the
forward value and a closure that routes the upstream gradient to the
operation's parents.

Shape discipline: everything is 2-D.  Scalars are (1, 1), row vectors are
(1, n).  Reductions keep dims so shapes never collapse.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "as_tensor",
    "concat_cols",
    "concat_rows",
    "gather_rows",
    "segment_sum",
]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


class Tensor:
    """A 2-D float64 array tracked on the autodiff tape.

    Set ``requires_grad=True`` on leaves (parameters).  Gradients appear in
    ``.grad`` after calling :meth:`backward` on a (1, 1) result.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward_fn: Callable[[], None] | None = None,
    ):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward_fn = _backward_fn

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single entry, got shape {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- tape construction ----------------------------------------------

    @staticmethod
    def _make(
        data: np.ndarray,
        parents: tuple["Tensor", ...],
        backward_fn: Callable[["Tensor"], Callable[[], None]],
    ) -> "Tensor":
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs)
        if needs:
            out._parents = parents
            out._backward_fn = backward_fn(out)
        return out

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data + other.data

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad, other.shape))

            return fn

        return Tensor._make(data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(-out.grad)

            return fn

        return Tensor._make(-self.data, (self,), bw)

    def __sub__(self, other) -> "Tensor":
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        data = self.data * other.data

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad * self.data, other.shape))

            return fn

        return Tensor._make(data, (self, other), bw)

    __rmul__ = __mul__

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"matmul mismatch: {self.shape} @ {other.shape}")
        data = self.data @ other.data

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad @ other.data.T)
                if other.requires_grad:
                    other._accumulate(self.data.T @ out.grad)

            return fn

        return Tensor._make(data, (self, other), bw)

    # -- elementwise nonlinearities ---------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0.0

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad * mask)

            return fn

        return Tensor._make(self.data * mask, (self,), bw)

    def sigmoid(self) -> "Tensor":
        # Numerically symmetric form: never exponentiates a positive number.
        x = self.data
        pos = x >= 0
        z = np.exp(np.where(pos, -x, x))
        s = np.where(pos, 1.0 / (1.0 + z), z / (1.0 + z))

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad * s * (1.0 - s))

            return fn

        return Tensor._make(s, (self,), bw)

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise ValueError("log of non-positive entry")

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad / self.data)

            return fn

        return Tensor._make(np.log(self.data), (self,), bw)

    def exp(self) -> "Tensor":
        e = np.exp(self.data)

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad * e)

            return fn

        return Tensor._make(e, (self,), bw)

    def powf(self, p: float) -> "Tensor":
        """Elementwise power with a constant exponent, base must be >= 0."""
        if np.any(self.data < 0.0):
            raise ValueError("powf base must be non-negative")
        data = self.data**p

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    if p == 0.0:
                        return  # derivative of the constant 1
                    with np.errstate(divide="ignore"):
                        d = p * self.data ** (p - 1.0)
                    d = np.where(np.isfinite(d), d, 0.0)
                    self._accumulate(out.grad * d)

            return fn

        return Tensor._make(data, (self,), bw)

    def clamp(self, lo: float, hi: float) -> "Tensor":
        """Clip to [lo, hi]; gradient is zero outside the open interval."""
        inside = (self.data > lo) & (self.data < hi)

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(out.grad * inside)

            return fn

        return Tensor._make(np.clip(self.data, lo, hi), (self,), bw)

    # -- reductions --------------------------------------------------------

    def sum(self, axis: int | None = None) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=True)
        if axis is None:
            data = data.reshape(1, 1)
        shape = self.shape

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    self._accumulate(np.broadcast_to(out.grad, shape).copy())

            return fn

        return Tensor._make(data, (self,), bw)

    def mean(self, axis: int | None = None) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            n = self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    # -- row-wise softmax family --------------------------------------------

    def log_softmax_rows(self) -> "Tensor":
        x = self.data
        m = x.max(axis=1, keepdims=True)
        z = x - m
        lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
        data = z - lse
        soft = np.exp(data)

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    g = out.grad
                    self._accumulate(g - soft * g.sum(axis=1, keepdims=True))

            return fn

        return Tensor._make(data, (self,), bw)

    def softmax_rows(self) -> "Tensor":
        x = self.data
        z = np.exp(x - x.max(axis=1, keepdims=True))
        p = z / z.sum(axis=1, keepdims=True)

        def bw(out: "Tensor"):
            def fn():
                if self.requires_grad:
                    g = out.grad
                    dot = (g * p).sum(axis=1, keepdims=True)
                    self._accumulate(p * (g - dot))

            return fn

        return Tensor._make(p, (self,), bw)

    # -- backward pass ---------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from this (1, 1) tensor through the recorded tape."""
        if self.shape != (1, 1):
            raise ValueError(f"backward() starts from a scalar, got {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones((1, 1))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn()


def as_tensor(x) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors vertically; all must share a column count."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_rows needs at least one tensor")
    data = np.concatenate([p.data for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def bw(out: Tensor):
        def fn():
            for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    p._accumulate(out.grad[a:b])

        return fn

    return Tensor._make(data, tuple(parts), bw)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Stack tensors horizontally; all must share a row count."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat_cols needs at least one tensor")
    data = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def bw(out: Tensor):
        def fn():
            for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    p._accumulate(out.grad[:, a:b])

        return fn

    return Tensor._make(data, tuple(parts), bw)


def gather_rows(t: Tensor, index: Iterable[int]) -> Tensor:
    """Select rows by index (repeats allowed); gradient scatter-adds back."""
    idx = np.asarray(list(index), dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= t.shape[0]):
        raise IndexError("gather_rows index out of range")
    data = t.data[idx] if idx.size else np.zeros((0, t.shape[1]))

    def bw(out: Tensor):
        def fn():
            if t.requires_grad and idx.size:
                g = np.zeros_like(t.data)
                np.add.at(g, idx, out.grad)
                t._accumulate(g)

        return fn

    return Tensor._make(data, (t,), bw)


def segment_sum(t: Tensor, segment: Iterable[int], num_segments: int) -> Tensor:
    """Sum rows of `t` into `num_segments` buckets given per-row bucket ids."""
    seg = np.asarray(list(segment), dtype=np.intp)
    if seg.size != t.shape[0]:
        raise ValueError("segment ids must cover every row")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise IndexError("segment id out of range")
    data = np.zeros((num_segments, t.shape[1]))
    if seg.size:
        np.add.at(data, seg, t.data)

    def bw(out: Tensor):
        def fn():
            if t.requires_grad and seg.size:
                t._accumulate(out.grad[seg])

        return fn

    return Tensor._make(data, (t,), bw)

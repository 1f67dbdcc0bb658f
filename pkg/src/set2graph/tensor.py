"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every op is a plain function returning a new :class:`Tensor`. When any input
requires a gradient, the output keeps references to its parents plus a closure
that maps the output gradient to parent gradients. ``backward`` linearizes
that graph into a tape (topological order), runs it once in reverse and then
releases it; tapes are single-use.

Shapes are never coerced implicitly. Binary elementwise ops require equal
shapes; use :func:`broadcast_to` or :func:`reshape` to line operands up.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeError",
    "NumericError",
    "TapeError",
    "no_grad",
    "matmul",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "add_scalar",
    "neg",
    "relu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "sum",
    "mean",
    "max",
    "total",
    "concat_features",
    "softmax_rows",
    "reshape",
    "transpose_last",
    "broadcast_to",
    "take_rows",
    "crop",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Operand shapes violate an op's contract."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class TapeError(RuntimeError):
    """Misuse of the backward pass (non-scalar root, consumed tape)."""


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording in the current thread."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        # leaves that track gradients start at zero so unused leaves read 0
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._consumed = False

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._consumed = False
        if _grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- backward ------------------------------------------------------
    def backward(self) -> None:
        """Populate ``.grad`` of every tracked leaf reachable from this scalar."""
        if self._consumed:
            raise TapeError("backward already ran on this graph; tapes are single-use")
        if self.data.ndim != 0 and self.data.size != 1:
            raise TapeError(f"backward needs a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise TapeError("root does not depend on any tensor requiring grad")

        tape = _build_tape(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(tape):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is not None:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if g is not None:
                for parent, pg in zip(node._parents, node._backward(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            node._backward = None
            node._parents = ()
            node._consumed = True


def _build_tape(root: Tensor) -> list[Tensor]:
    """Topological order (inputs before outputs) of the tracked graph."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; stacked operands must share identical leading extents."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return (
            g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None,
            np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None,
        )

    return Tensor._from_op(ad @ bd, (a, b), backward)


# ---------------------------------------------------------------------------
# elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor._from_op(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return Tensor._from_op(out, (a, b), lambda g: (g / bd, -g * out / bd))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._from_op(x.data * c, (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    return Tensor._from_op(x.data + float(c), (x,), lambda g: (g,))


def neg(x: Tensor) -> Tensor:
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,))


def relu(x: Tensor) -> Tensor:
    # subgradient 0 at exactly 0
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return Tensor._from_op(np.log(xd), (x,), lambda g: (g / xd,))


# ---------------------------------------------------------------------------
# reductions

def _axis(x: Tensor, axis: int) -> int:
    nd = x.ndim
    if not -nd <= axis < nd:
        raise ShapeError(f"axis {axis} out of range for shape {x.shape}")
    return axis % nd


def sum(x: Tensor, axis: int) -> Tensor:  # noqa: A001
    ax = _axis(x, axis)
    shape = x.shape
    return Tensor._from_op(
        x.data.sum(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape),),
    )


def mean(x: Tensor, axis: int) -> Tensor:
    ax = _axis(x, axis)
    shape = x.shape
    k = shape[ax]
    return Tensor._from_op(
        x.data.mean(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g / k, ax), shape),),
    )


def max(x: Tensor, axis: int) -> Tensor:  # noqa: A001
    """Max over ``axis``; the gradient flows to the first maximal entry."""
    ax = _axis(x, axis)
    idx = np.expand_dims(np.argmax(x.data, axis=ax), ax)
    out = np.take_along_axis(x.data, idx, axis=ax).squeeze(ax)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, ax), axis=ax)
        return (gx,)

    return Tensor._from_op(out, (x,), backward)


def total(x: Tensor) -> Tensor:
    """Sum of every entry, as a 0-d tensor."""
    shape = x.shape
    return Tensor._from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


# ---------------------------------------------------------------------------
# structural

def concat_features(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    if not parts:
        raise ShapeError("concat_features needs at least one part")
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat_features: leading extents differ {lead} vs {p.shape[:-1]}")
    if len(parts) == 1:
        return parts[0]
    widths = [p.shape[-1] for p in parts]
    cuts = np.cumsum(widths)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=-1))

    return Tensor._from_op(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax_rows: non-finite input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose_last(x: Tensor) -> Tensor:
    """Swap the two trailing axes."""
    if x.ndim < 2:
        raise ShapeError(f"transpose_last needs rank >= 2, got {x.shape}")
    return Tensor._from_op(np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit numpy-style broadcast; the gradient sums over replicated axes."""
    shape = tuple(shape)
    src = x.shape
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError as exc:
        raise ShapeError(f"broadcast_to: cannot broadcast {src} to {shape}") from exc

    def backward(g):
        lead = len(shape) - len(src)
        g = g.sum(axis=tuple(range(lead))) if lead else g
        axes = tuple(i for i, s in enumerate(src) if s == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)

    return Tensor._from_op(out, (x,), backward)


def take_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-d tensor; ``index`` may have any shape."""
    if x.ndim != 2:
        raise ShapeError(f"take_rows expects a matrix, got {x.shape}")
    index = np.asarray(index, dtype=np.intp)
    n, d = x.shape
    flat = index.ravel()

    def backward(g):
        gx = np.zeros((n, d))
        g2 = g.reshape(-1, d)
        # bincount per column is much faster than np.add.at
        for c in range(d):
            gx[:, c] = np.bincount(flat, weights=g2[:, c], minlength=n)
        return (gx,)

    return Tensor._from_op(x.data[index], (x,), backward)


def crop(x: Tensor, key: tuple[slice, ...]) -> Tensor:
    """Basic slicing (no fancy indexing); gradient is zero outside the window."""
    if not all(isinstance(k, slice) for k in key):
        raise TypeError("crop accepts slices only")
    shape = x.shape

    def backward(g):
        gx = np.zeros(shape)
        gx[key] = g
        return (gx,)

    return Tensor._from_op(x.data[key], (x,), backward)


# ---------------------------------------------------------------------------
# verification

def finite_difference_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max over coordinates of ``|g_ad - g_fd| / max(1, |g_fd|)`` (central differences)."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    f(leaf).backward()
    g_ad = leaf.grad.ravel()

    base = x.data.copy()
    flat = base.ravel()
    g_fd = np.empty_like(flat)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f(Tensor(base)).item()
            flat[i] = orig - eps
            lo = f(Tensor(base)).item()
            flat[i] = orig
            g_fd[i] = (hi - lo) / (2 * eps)
    if flat.size == 0:
        return 0.0
    return float(np.max(np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))))

"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation validates shapes, checks its output for NaN/Inf, and
records a vector-Jacobian product so that ``backward`` on a scalar loss
fills the ``grad`` buffers of everything that contributed to it. The
design trades speed for auditability: 64-bit arithmetic end to end,
deterministic reduction orders, and no broadcasting except the bias/gain
pattern (a 1-D operand applied along the last axis).

Gradient flow per backward call is computed into a scratch map first and
only then added into ``grad`` buffers, so repeated backward calls
accumulate exactly once per call.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from ..errors import NumericsError, ShapeError, UsageError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _check_finite(data: np.ndarray, op: str) -> None:
    # any nan or inf propagates through the sum (inf of mixed sign becomes
    # nan), so one reduction replaces a full isfinite scan; a sum that
    # overflows on finite inputs only happens when values are near 1e308,
    # at which point aborting is right anyway
    if data.size and not math.isfinite(float(data.sum())):
        if np.all(np.isfinite(data)):
            raise NumericsError(
                f"{op} produced values large enough to overflow a sum"
            )
        raise NumericsError(f"{op} produced non-finite values")


class Tensor:
    """A dense float64 array plus optional gradient buffer.

    ``requires_grad`` marks leaves to optimize; results of ops on such
    tensors require grad themselves and remember how to push gradients
    back to their parents.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "tensor construction")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    # ---------------------------------------------------------------- basics

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __getstate__(self):
        # pickling carries values only; any graph edges are dropped, which
        # is what evaluation workers need
        return {"data": self.data, "requires_grad": self.requires_grad}

    def __setstate__(self, state):
        self.data = state["data"]
        self.grad = None
        self.requires_grad = state["requires_grad"]
        self._parents = ()
        self._vjp = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -------------------------------------------------------------- backward

    def backward(self) -> None:
        """Reverse-mode sweep from this scalar.

        Populates ``grad`` on every tensor in the graph that requires
        grad. Calling again without zeroing adds another full
        contribution (gradient accumulation).
        """
        if self.data.size != 1:
            raise UsageError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("backward on a tensor that does not require grad")

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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        flow: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = flow.get(id(node))
            if g is None:
                continue
            if node._vjp is not None:
                for parent, contribution in zip(node._parents, node._vjp(g)):
                    if not parent.requires_grad or contribution is None:
                        continue
                    _check_finite(contribution, "backward")
                    key = id(parent)
                    if key in flow:
                        flow[key] = flow[key] + contribution
                    else:
                        flow[key] = contribution
        for node in order:
            g = flow.get(id(node))
            if g is not None:
                node.grad = g if node.grad is None else node.grad + g


def _result(data: np.ndarray, op: str, parents: tuple[Tensor, ...], vjp) -> Tensor:
    _check_finite(data, op)
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _sum_to_1d(g: np.ndarray) -> np.ndarray:
    """Collapse all leading axes (the bias-broadcast adjoint)."""
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# ------------------------------------------------------------------ arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; also accepts a 1-D ``b`` added along the last axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _result(a.data + b.data, "add", (a, b), lambda g: (g, g))
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return _result(a.data + b.data, "add", (a, b), lambda g: (g, _sum_to_1d(g)))
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")
    return _result(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; also accepts a 1-D ``b`` scaling the last axis."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:
        return _result(
            a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data)
        )
    if b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        return _result(
            a.data * b.data, "mul", (a, b),
            lambda g: (g * b.data, _sum_to_1d(g * a.data)),
        )
    raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, "scale", (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data + c, "add_scalar", (a,), lambda g: (g,))


def square(a: Tensor) -> Tensor:
    return _result(a.data * a.data, "square", (a,), lambda g: (2.0 * g * a.data,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors or two batch-matched 3-D tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim == b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    elif a.data.ndim == b.data.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeError(f"matmul: batch shapes differ, {a.shape} @ {b.shape}")
    else:
        raise ShapeError(f"matmul: expected both 2-D or both 3-D, got {a.shape} @ {b.shape}")

    def vjp(g):
        return (
            np.matmul(g, np.swapaxes(b.data, -1, -2)),
            np.matmul(np.swapaxes(a.data, -1, -2), g),
        )

    return _result(np.matmul(a.data, b.data), "matmul", (a, b), vjp)


# ----------------------------------------------------------------- activations

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), "relu", (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, "tanh", (a,), lambda g: (g * (1.0 - y * y),))


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = a.data
    inner = _GELU_C * (x + _GELU_A * (x * x * x))
    t = np.tanh(inner)

    def vjp(g):
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _result(0.5 * x * (1.0 + t), "gelu", (a,), vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis, numerically stabilized."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, "softmax", (a,), vjp)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x - mu) * inv

    def vjp(g):
        g_mean = g.mean(axis=-1, keepdims=True)
        gy_mean = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - g_mean - y * gy_mean),)

    return _result(y, "layer_norm", (a,), vjp)


# ------------------------------------------------------------------ structure

def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Select rows of ``table`` by an integer id array of any shape."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding ids must be integers, got {ids.dtype}")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding ids outside [0, {table.shape[0] - 1}]: "
            f"[{ids.min()}, {ids.max()}]"
        )

    def vjp(g):
        d_table = np.zeros_like(table.data)
        np.add.at(d_table, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (d_table,)

    return _result(table.data[ids], "embedding_lookup", (table,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size and -1 not in shape:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    original = a.shape
    return _result(
        a.data.reshape(shape), "reshape", (a,), lambda g: (g.reshape(original),)
    )


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(
        a.data.transpose(axes), "transpose", (a,), lambda g: (g.transpose(inverse),)
    )


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice along one axis."""
    axis = int(axis)
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ShapeError(f"slice_axis: axis {axis} invalid for shape {a.shape}")
    axis %= a.data.ndim
    if not 0 <= start < stop <= a.shape[axis]:
        raise ShapeError(
            f"slice_axis: [{start}, {stop}) invalid for axis {axis} of shape {a.shape}"
        )
    index = tuple(
        slice(start, stop) if d == axis else slice(None) for d in range(a.data.ndim)
    )

    def vjp(g):
        d = np.zeros_like(a.data)
        d[index] = g
        return (d,)

    return _result(a.data[index], "slice_axis", (a,), vjp)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    axis = int(axis) % tensors[0].data.ndim
    for t in tensors[1:]:
        if t.data.ndim != tensors[0].data.ndim:
            raise ShapeError(
                f"concat: rank mismatch {tensors[0].shape} vs {t.shape}"
            )
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        pieces = []
        for i in range(len(tensors)):
            index = tuple(
                slice(offsets[i], offsets[i + 1]) if d == axis else slice(None)
                for d in range(g.ndim)
            )
            pieces.append(g[index])
        return tuple(pieces)

    return _result(
        np.concatenate([t.data for t in tensors], axis=axis),
        "concat",
        tuple(tensors),
        vjp,
    )


def gather_rows(a: Tensor, indices) -> Tensor:
    """Pick one element per row of a 2-D tensor: out[i] = a[i, indices[i]]."""
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a 2-D tensor, got {a.shape}")
    indices = np.asarray(indices)
    if indices.shape != (a.shape[0],) or not np.issubdtype(indices.dtype, np.integer):
        raise ShapeError(
            f"gather_rows: indices must be {a.shape[0]} integers, got "
            f"{indices.shape} {indices.dtype}"
        )
    if indices.size and (indices.min() < 0 or indices.max() >= a.shape[1]):
        raise ShapeError(f"gather_rows: index outside [0, {a.shape[1] - 1}]")
    rows = np.arange(a.shape[0])

    def vjp(g):
        d = np.zeros_like(a.data)
        np.add.at(d, (rows, indices), g)
        return (d,)

    return _result(a.data[rows, indices], "gather_rows", (a,), vjp)


# ------------------------------------------------------------------ reductions

def _restore_axis(g: np.ndarray, shape: tuple[int, ...], axis: int | None) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    return np.broadcast_to(np.expand_dims(g, axis), shape).copy()


def sum_(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    return _result(
        a.data.sum(axis=axis), "sum", (a,), lambda g: (_restore_axis(g, shape, axis),)
    )


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    shape = a.shape
    n = a.size if axis is None else shape[axis]
    return _result(
        a.data.mean(axis=axis),
        "mean",
        (a,),
        lambda g: (_restore_axis(g, shape, axis) / n,),
    )


def max_(a: Tensor, axis: int | None = None) -> Tensor:
    """Max reduction; the subgradient flows to the first maximal element."""
    x = a.data
    if axis is None:
        flat_idx = int(np.argmax(x))

        def vjp(g):
            d = np.zeros_like(x)
            d.reshape(-1)[flat_idx] = np.asarray(g).reshape(())
            return (d,)

        return _result(x.max(), "max", (a,), vjp)

    idx = np.argmax(x, axis=axis)

    def vjp_axis(g):
        d = np.zeros_like(x)
        expanded = np.expand_dims(idx, axis)
        np.put_along_axis(d, expanded, np.expand_dims(g, axis), axis=axis)
        return (d,)

    return _result(x.max(axis=axis), "max", (a,), vjp_axis)

"""Dense float64 tensors with reverse-mode gradients.

A dynamic tape: every operation returns a new :class:`Tensor` that
remembers its parents and a closure propagating the output gradient
back to them. Only the primitives needed by the loss graphs are
provided (matmul, elementwise arithmetic, exp/log/pow, sum/mean,
hinge, softmax, layer norm, L2 normalize, tanh, cosine similarity,
Euclidean distance, plus the indexing/reshaping glue).

Finiteness policy: primitives that can map finite inputs to NaN/Inf
(exp, log, div, pow, l2_normalize) validate their output and raise
:class:`NonFiniteError` naming the primitive; polynomial primitives
cannot overflow at the magnitudes this package produces. `eval_loss`
and `grad_loss` additionally validate the final scalar and the
collected gradients.
"""

from __future__ import annotations

from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

Array = np.ndarray


class ShapeMismatchError(ValueError):
    """Two operands have incompatible shapes for a primitive."""

    def __init__(self, op: str, shape_a, shape_b):
        self.op = op
        self.shapes = (tuple(shape_a), tuple(shape_b))
        super().__init__(
            f"{op}: incompatible shapes {tuple(shape_a)} and {tuple(shape_b)}"
        )


class NonFiniteError(ArithmeticError):
    """A primitive produced NaN or Inf."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"non-finite values produced by primitive '{op}'")


def _as_array(values) -> Array:
    return np.asarray(values, dtype=np.float64)


class Tensor:
    """A float64 array plus an optional gradient and tape linkage.

    Learnable leaves are created with ``requires_grad=True``; anything
    derived from at least one such leaf records its parents and a
    backward closure. Constants carry no tape at all, so graphs built
    purely from constants evaluate with zero autodiff overhead.
    """

    __slots__ = ("values", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_array(values)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[Array], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        """A constant view of this tensor's values (no tape)."""
        return Tensor(self.values)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output."""
        if self.values.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.values)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, grad={self.requires_grad})"


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_UNSAFE_CHECK = ("exp", "log", "div", "pow", "l2_normalize")


def _node(values: Array, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
    if op in _UNSAFE_CHECK and not np.all(np.isfinite(values)):
        raise NonFiniteError(op)
    out = Tensor(values)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: Array) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.values.shape)
    if t.grad is None:
        t.grad = np.array(g)  # owned copy; closures may reuse their buffers
    else:
        t.grad += g


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a gradient down to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# elementwise ------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        values = a.values + b.values
    except ValueError:
        raise ShapeMismatchError("add", a.shape, b.shape) from None

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _node(values, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        values = a.values - b.values
    except ValueError:
        raise ShapeMismatchError("sub", a.shape, b.shape) from None

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return _node(values, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        values = a.values * b.values
    except ValueError:
        raise ShapeMismatchError("mul", a.shape, b.shape) from None

    def backward(g: Array) -> None:
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return _node(values, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        with np.errstate(divide="ignore", invalid="ignore"):
            values = a.values / b.values
    except ValueError:
        raise ShapeMismatchError("div", a.shape, b.shape) from None

    def backward(g: Array) -> None:
        _accumulate(a, g / b.values)
        _accumulate(b, -g * a.values / (b.values * b.values))

    return _node(values, (a, b), backward, "div")


def power(a, p: float) -> Tensor:
    a = _wrap(a)
    p = float(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = a.values**p

    def backward(g: Array) -> None:
        _accumulate(a, g * p * a.values ** (p - 1.0))

    return _node(values, (a,), backward, "pow")


def exp(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(over="ignore"):
        values = np.exp(a.values)

    def backward(g: Array) -> None:
        _accumulate(a, g * values)

    return _node(values, (a,), backward, "exp")


def log(a) -> Tensor:
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        values = np.log(a.values)

    def backward(g: Array) -> None:
        _accumulate(a, g / a.values)

    return _node(values, (a,), backward, "log")


def tanh(a) -> Tensor:
    a = _wrap(a)
    values = np.tanh(a.values)

    def backward(g: Array) -> None:
        _accumulate(a, g * (1.0 - values * values))

    return _node(values, (a,), backward, "tanh")


def relu(a) -> Tensor:
    """Elementwise max(0, x); subgradient 0 at the kink."""
    a = _wrap(a)
    values = np.maximum(a.values, 0.0)

    def backward(g: Array) -> None:
        _accumulate(a, g * (a.values > 0.0))

    return _node(values, (a,), backward, "relu")


# reductions -------------------------------------------------------------


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    values = a.values.sum(axis=axis, keepdims=keepdims)

    def backward(g: Array) -> None:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.values.shape))

    return _node(values, (a,), backward, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    values = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.values.size if axis is None else np.prod(
        [a.values.shape[i] for i in np.atleast_1d(axis)]
    )

    def backward(g: Array) -> None:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.values.shape) / count)

    return _node(values, (a,), backward, "mean")


# linear algebra ---------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    values = a.values @ b.values

    def backward(g: Array) -> None:
        _accumulate(a, g @ np.swapaxes(b.values, -1, -2))
        _accumulate(b, np.swapaxes(a.values, -1, -2) @ g)

    return _node(values, (a, b), backward, "matmul")


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    a = _wrap(a)
    values = a.values - a.values.max(axis=axis, keepdims=True)
    np.exp(values, out=values)
    values /= values.sum(axis=axis, keepdims=True)

    def backward(g: Array) -> None:
        inner = (g * values).sum(axis=axis, keepdims=True)
        out = g - inner
        out *= values
        _accumulate(a, out)

    return _node(values, (a,), backward, "softmax")


def layer_norm(a, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance."""
    a = _wrap(a)
    centered = a.values - a.values.mean(axis=-1, keepdims=True)
    std = np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    values = centered / std

    def backward(g: Array) -> None:
        n = a.values.shape[-1]
        gy = g - g.mean(axis=-1, keepdims=True)
        gy -= values * ((g * values).sum(axis=-1, keepdims=True) / n)
        gy /= std
        _accumulate(a, gy)

    return _node(values, (a,), backward, "layer_norm")


def l2_normalize(a, axis: int = -1) -> Tensor:
    """Scale the given axis to unit Euclidean norm."""
    a = _wrap(a)
    norm = np.sqrt((a.values * a.values).sum(axis=axis, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        values = a.values / norm

    def backward(g: Array) -> None:
        inner = (g * values).sum(axis=axis, keepdims=True)
        _accumulate(a, (g - values * inner) / norm)

    return _node(values, (a,), backward, "l2_normalize")


def cosine_similarity(a, b, axis: int = -1) -> Tensor:
    """Cosine of the angle between `a` and `b` along `axis`."""
    return tensor_sum(mul(l2_normalize(a, axis), l2_normalize(b, axis)), axis=axis)


def euclidean_distance(a, b, axis: int = -1) -> Tensor:
    """L2 distance along `axis`; subgradient 0 where the distance is 0."""
    a, b = _wrap(a), _wrap(b)
    try:
        delta = a.values - b.values
    except ValueError:
        raise ShapeMismatchError("euclidean_distance", a.shape, b.shape) from None
    values = np.sqrt((delta * delta).sum(axis=axis))

    def backward(g: Array) -> None:
        safe = np.where(values == 0.0, 1.0, values)
        scale = np.expand_dims(g * (values != 0.0) / safe, axis)
        _accumulate(a, scale * delta)
        _accumulate(b, -scale * delta)

    return _node(values, (a, b), backward, "euclidean_distance")


def logsumexp(a, axis: int = -1) -> Tensor:
    """log(sum(exp(x))) along `axis`, stabilized by max subtraction."""
    a = _wrap(a)
    m = a.values.max(axis=axis, keepdims=True)
    shifted = sub(a, Tensor(m))
    out = log(tensor_sum(exp(shifted), axis=axis))
    return add(out, Tensor(np.squeeze(m, axis=axis)))


# shape manipulation -----------------------------------------------------


def reshape(a, shape) -> Tensor:
    a = _wrap(a)
    values = a.values.reshape(shape)

    def backward(g: Array) -> None:
        _accumulate(a, g.reshape(a.values.shape))

    return _node(values, (a,), backward, "reshape")


def transpose(a, axes) -> Tensor:
    a = _wrap(a)
    values = a.values.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g: Array) -> None:
        _accumulate(a, g.transpose(inverse))

    return _node(values, (a,), backward, "transpose")


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = [_wrap(p) for p in parts]
    values = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(index)])

    return _node(values, tuple(parts), backward, "concat")


def getitem(a, key) -> Tensor:
    a = _wrap(a)
    values = a.values[key]

    def backward(g: Array) -> None:
        buf = np.zeros_like(a.values)
        np.add.at(buf, key, g)
        _accumulate(a, buf)

    return _node(values, (a,), backward, "getitem")


def take_per_row(a, indices) -> Tensor:
    """out[i] = a[i, indices[i]] for a 2-D tensor."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(a.shape[0])
    values = a.values[rows, idx]

    def backward(g: Array) -> None:
        buf = np.zeros_like(a.values)
        np.add.at(buf, (rows, idx), g)
        _accumulate(a, buf)

    return _node(values, (a,), backward, "take_per_row")


def tile_leading(a, reps: int) -> Tensor:
    """Stack `reps` copies of `a` along a new leading axis."""
    a = _wrap(a)
    values = np.broadcast_to(a.values, (reps,) + a.values.shape).copy()

    def backward(g: Array) -> None:
        _accumulate(a, g.sum(axis=0))

    return _node(values, (a,), backward, "tile_leading")


def repeat_rows(a, reps: int) -> Tensor:
    """Repeat each leading-axis entry `reps` times (interleaved)."""
    a = _wrap(a)
    values = np.repeat(a.values, reps, axis=0)

    def backward(g: Array) -> None:
        shaped = g.reshape((a.values.shape[0], reps) + a.values.shape[1:])
        _accumulate(a, shaped.sum(axis=1))

    return _node(values, (a,), backward, "repeat_rows")


# parameter sets and the loss-level API -----------------------------------


class ParamSet(Mapping[str, Tensor]):
    """Uniquely named learnable tensors, iterated lexicographically."""

    def __init__(self, params: Mapping[str, Tensor] | None = None):
        self._params: dict[str, Tensor] = {}
        if params:
            for name, tensor in params.items():
                self.add(name, tensor)

    def add(self, name: str, tensor: Tensor) -> None:
        if name in self._params:
            raise ValueError(f"duplicate parameter name: {name!r}")
        tensor.requires_grad = True
        self._params[name] = tensor

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._params))

    def names(self) -> list[str]:
        return sorted(self._params)

    def zero_grad(self) -> None:
        for name in self._params:
            self._params[name].grad = None

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for name in self.names():
            out.add(name, Tensor(self._params[name].values.copy()))
        return out


LossGraph = Callable[[ParamSet, object], Tensor]


def eval_loss(graph: LossGraph, params: ParamSet, batch_inputs=None) -> float:
    """Evaluate a scalar loss graph at the given parameters."""
    out = graph(params, batch_inputs)
    if out.values.size != 1:
        raise ValueError(f"loss graph must yield a scalar, got shape {out.shape}")
    value = float(out.values)
    if not np.isfinite(value):
        raise NonFiniteError("loss")
    return value


def grad_loss(graph: LossGraph, params: ParamSet, batch_inputs=None) -> dict[str, Array]:
    """Gradient of a scalar loss graph with respect to every parameter.

    Parameters the loss does not touch get exact zero gradients of the
    right shape; frozen (non-parameter) tensors get none at all.
    """
    params.zero_grad()
    out = graph(params, batch_inputs)
    if out.values.size != 1:
        raise ValueError(f"loss graph must yield a scalar, got shape {out.shape}")
    if not np.isfinite(float(out.values)):
        raise NonFiniteError("loss")
    out.backward()
    grads: dict[str, Array] = {}
    for name in params.names():
        tensor = params[name]
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.values)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("gradient accumulation")
        grads[name] = g.copy()
    return grads


def finite_difference_gradient(
    graph: LossGraph,
    params: ParamSet,
    name: str,
    index: int,
    step: float = 1e-5,
    batch_inputs=None,
) -> float:
    """Central-difference derivative of the loss along one coordinate."""
    if step <= 0:
        raise ValueError("step must be positive")
    values = params[name].values
    original = values.flat[index]
    try:
        values.flat[index] = original + step
        hi = eval_loss(graph, params, batch_inputs)
        values.flat[index] = original - step
        lo = eval_loss(graph, params, batch_inputs)
    finally:
        values.flat[index] = original
    return (hi - lo) / (2.0 * step)

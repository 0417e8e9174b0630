"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation records a backward closure on the output tensor; calling
``backward()`` on a scalar walks the recorded graph once in reverse
topological order and accumulates gradients additively into the leaves.
The graph is rebuilt on every forward pass and consumed by ``backward()``.

All math runs at 64-bit precision. Any operation that produces a NaN or
Inf raises :class:`NumericError` naming the producing op.
"""

from __future__ import annotations

import contextlib

import numpy as np


class NumericError(ArithmeticError):
    """A tensor operation produced non-finite values."""


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (for evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NumericError(f"non-finite values produced by op '{op}'")


def _as_array(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """N-dimensional float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_op", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        _check_finite(self.data, "tensor")
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._op = "leaf"
        self._consumed = False

    # -- construction of op outputs ------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: tuple["Tensor", ...], backward_fn, op: str) -> "Tensor":
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._consumed = False
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
            out._op = op
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
            out._op = op
        return out

    # -- basic introspection --------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # -- autodiff ---------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode pass from a scalar root; consumes the recorded graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar root, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward already called on this graph; rebuild the forward pass first")
        if not self.requires_grad:
            raise RuntimeError("root does not require grad; nothing to differentiate")

        # Iterative post-order topological sort (parents precede children).
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
        self._consumed = True
        # Release the graph; leaves keep their accumulated gradients.
        for node in topo:
            if node._parents:
                node._parents = ()
                node._backward_fn = None
                node.grad = None

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _ensure(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _ensure(other))

    def __rsub__(self, other):
        return sub(_ensure(other), self)

    def __mul__(self, other):
        return mul(self, _ensure(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _ensure(other))

    def __pow__(self, exponent):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over broadcast axes so it matches the operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ops --------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return Tensor._from_op(data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return Tensor._from_op(data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor._from_op(data, (a, b), backward, "mul")


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return Tensor._from_op(-a.data, (a,), backward, "neg")


def power(a: Tensor, exponent: float) -> Tensor:
    """Elementwise a**exponent for a scalar exponent."""
    p = float(exponent)
    data = a.data ** p

    def backward(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))

    return Tensor._from_op(data, (a,), backward, "pow")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return Tensor._from_op(data, (a,), backward, "relu")


# -- reductions ---------------------------------------------------------------


def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        _accumulate(a, _expand_reduced(g, a.data.shape, axis, keepdims))

    return Tensor._from_op(np.asarray(data), (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(data.size, 1)

    def backward(g):
        _accumulate(a, _expand_reduced(g, a.data.shape, axis, keepdims) / count)

    return Tensor._from_op(np.asarray(data), (a,), backward, "mean")


def mean_pool_time(x: Tensor) -> Tensor:
    """Average a [N, T, D] sequence over its time axis, giving [N, D].

    Gradient distributes 1/T to every frame.
    """
    if x.ndim != 3:
        raise ShapeError(f"mean_pool_time expects rank-3 [N, T, D] input, got shape {x.shape}")
    t_len = x.shape[1]
    if t_len == 0:
        raise ShapeError("mean_pool_time requires at least one frame (T >= 1)")
    data = x.data.mean(axis=1)

    def backward(g):
        _accumulate(x, np.broadcast_to(g[:, None, :], x.data.shape) / t_len)

    return Tensor._from_op(data, (x,), backward, "mean_pool_time")


# -- linear algebra ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires rank >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape))

    return Tensor._from_op(data, (a, b), backward, "matmul")


def transpose_last2(a: Tensor) -> Tensor:
    """Swap the trailing two axes."""
    if a.ndim < 2:
        raise ShapeError(f"transpose_last2 requires rank >= 2, got shape {a.shape}")
    data = a.data.swapaxes(-1, -2).copy()

    def backward(g):
        _accumulate(a, g.swapaxes(-1, -2))

    return Tensor._from_op(data, (a,), backward, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    """Order-preserving concatenation; gradient splits back by slice."""
    parts = [_ensure(t) for t in tensors]
    if not parts:
        raise ShapeError("concat requires at least one tensor")
    ref = parts[0].data.shape
    ax = axis if axis >= 0 else len(ref) + axis
    for t in parts[1:]:
        s = t.data.shape
        if len(s) != len(ref) or any(i != ax and s[i] != ref[i] for i in range(len(ref))):
            raise ShapeError(f"concat shapes incompatible along axis {axis}: {ref} vs {s}")
    data = np.concatenate([t.data for t in parts], axis=ax)
    offsets = np.cumsum([0] + [t.data.shape[ax] for t in parts])

    def backward(g):
        for t, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[ax] = slice(lo, hi)
                _accumulate(t, g[tuple(idx)])

    return Tensor._from_op(data, tuple(parts), backward, "concat")


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows of x along the leading axis; gradient scatter-adds back."""
    idx = np.asarray(indices, dtype=np.intp)
    n = x.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"gather index out of range for leading axis of size {n}")

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accumulate(x, gx)

    return Tensor._from_op(x.data[idx].copy(), (x,), backward, "gather_rows")


# -- normalized exponentials ---------------------------------------------------


def _normalize_axis(x: Tensor, axis: int, op: str) -> int:
    ax = axis if axis >= 0 else x.ndim + axis
    if ax < 0 or ax >= x.ndim:
        raise ShapeError(f"{op}: axis {axis} invalid for shape {x.shape}")
    if x.shape[ax] == 0:
        raise ShapeError(f"{op}: axis {axis} is empty for shape {x.shape}")
    return ax


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable softmax along an axis (row-max subtraction)."""
    ax = _normalize_axis(x, axis, "softmax")
    z = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=ax, keepdims=True)

    def backward(g):
        _accumulate(x, (g - (g * y).sum(axis=ax, keepdims=True)) * y)

    return Tensor._from_op(y, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Stable log-softmax: x - max - log(sum(exp(x - max)))."""
    ax = _normalize_axis(x, axis, "log_softmax")
    z = x.data - x.data.max(axis=ax, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=ax, keepdims=True))

    def backward(g):
        _accumulate(x, g - np.exp(y) * g.sum(axis=ax, keepdims=True))

    return Tensor._from_op(y, (x,), backward, "log_softmax")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer class targets.

    logits: [N, C]; targets: N integer class indices in [0, C).
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects [N, C] logits, got shape {logits.shape}")
    t = np.asarray(targets, dtype=np.intp)
    n, c = logits.shape
    if t.shape != (n,):
        raise ShapeError(f"cross_entropy expects {n} targets, got shape {t.shape}")
    if n < 1:
        raise ShapeError("cross_entropy requires at least one sample")
    bad = np.nonzero((t < 0) | (t >= c))[0]
    if bad.size:
        i = int(bad[0])
        raise ShapeError(f"cross_entropy target {int(t[i])} at index {i} outside [0, {c})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), t].mean()

    def backward(g):
        gx = np.exp(logp)
        gx[np.arange(n), t] -= 1.0
        _accumulate(logits, gx * (g / n))

    return Tensor._from_op(np.asarray(loss), (logits,), backward, "cross_entropy")


# -- verification -------------------------------------------------------------


def grad_check(f, params, h: float = 1e-5) -> float:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be a deterministic zero-argument callable returning a scalar
    Tensor computed from the current values of ``params``. Returns the max
    over all parameter coordinates of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    params = list(params)
    loss = f()
    if loss.data.size != 1:
        raise ShapeError("grad_check requires a scalar objective")
    for p in params:
        p.grad = None
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    for p in params:
        p.grad = None

    worst = 0.0
    with no_grad():
        for p, an in zip(params, analytic):
            flat = p.data.reshape(-1)
            aflat = an.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                step = h * max(1.0, abs(saved))
                flat[i] = saved + step
                up = float(f().data)
                flat[i] = saved - step
                down = float(f().data)
                flat[i] = saved
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise NumericError("non-finite objective while probing finite differences")
                numeric = (up - down) / (2.0 * step)
                err = abs(aflat[i] - numeric) / max(1.0, abs(aflat[i]), abs(numeric))
                if err > worst:
                    worst = err
    return worst

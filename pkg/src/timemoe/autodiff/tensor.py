"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations record onto an explicit :class:`Tape` while one is active; calling
:func:`backward` on a scalar loss replays the tape in reverse and accumulates
gradients into every ``requires_grad`` leaf.  Broadcasting is restricted to
leading batch dimensions (the smaller operand must match a trailing suffix of
the larger one); anything else requires an explicit reshape.
"""

from __future__ import annotations

import os
import threading

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an operation."""


_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


def _debug_checks() -> bool:
    return os.environ.get("TIMEMOE_DEBUG", "0") not in ("0", "", "false")


class Tensor:
    """Dense n-dimensional float64 value, optionally carrying a gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # convenience operators; full op set lives at module level
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of operations; inputs always precede their consumers.

    Usable as a context manager: ops executed inside the ``with`` block that
    touch a ``requires_grad`` tensor are recorded.
    """

    def __init__(self):
        self._ops = []  # (out, inputs, backward_fn)

    def __len__(self):
        return len(self._ops)

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("a tape is already active in this thread")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False

    def _record(self, out, inputs, backward_fn):
        self._ops.append((out, inputs, backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into each requires_grad leaf's .grad."""
        if loss.data.ndim != 0 and loss.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        if not self._ops:
            raise RuntimeError("backward on an empty tape")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        tensors: dict[int, Tensor] = {id(loss): loss}
        for out, inputs, backward_fn in reversed(self._ops):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for inp, gin in zip(inputs, backward_fn(g)):
                if gin is None:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gin
                else:
                    grads[key] = gin
                    tensors[key] = inp
        for key, g in grads.items():
            t = tensors[key]
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g


class no_grad:
    """Context manager suspending tape recording (evaluation mode)."""

    def __enter__(self):
        self._saved = _active_tape()
        _state.tape = None
        return self

    def __exit__(self, *exc):
        _state.tape = self._saved
        return False


def backward(loss: Tensor) -> None:
    tape = _active_tape()
    if tape is None:
        raise RuntimeError("backward requires an active tape")
    tape.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finite_check(arr: np.ndarray, op: str) -> None:
    if _debug_checks() and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite value produced by {op}")


def _make(op: str, data: np.ndarray, inputs, backward_fn) -> Tensor:
    _finite_check(data, op)
    out = Tensor(data)
    out.requires_grad = any(t.requires_grad for t in inputs)
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._record(out, inputs, backward_fn)
    return out


def _broadcast_shapes(a_shape, b_shape, op: str):
    """Allow identical shapes or one operand matching a trailing suffix."""
    if a_shape == b_shape:
        return
    small, big = (a_shape, b_shape) if len(a_shape) < len(b_shape) else (b_shape, a_shape)
    if len(small) == len(big) or big[len(big) - len(small):] != small:
        raise ShapeError(f"{op}: shapes {a_shape} and {b_shape} do not conform")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(range(g.ndim - len(shape)))
    return g.sum(axis=axes).reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes(a.shape, b.shape, "add")
    return _make("add", a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes(a.shape, b.shape, "sub")
    return _make("sub", a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes(a.shape, b.shape, "mul")
    return _make("mul", a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shapes(a.shape, b.shape, "div")
    return _make("div", a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ for {a.shape} and {b.shape}")
    if b.ndim > 2 and a.ndim != b.ndim:
        raise ShapeError(f"matmul: batched operands must share leading dims, got {a.shape} and {b.shape}")

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        if b.ndim == 2 and gb.ndim > 2:
            gb = gb.sum(axis=tuple(range(gb.ndim - 2)))
        return ga, gb

    return _make("matmul", a.data @ b.data, (a, b), bw)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    return _make("reshape", a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(a.shape),))


def transpose(a, axes) -> Tensor:
    a = _as_tensor(a)
    inv = np.argsort(axes)
    return _make("transpose", a.data.transpose(axes), (a,),
                 lambda g: (g.transpose(inv),))


def concatenate(tensors, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return _make("concatenate", np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), bw)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    a = _as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make("narrow", a.data[idx], (a,), bw)


def take_along_axis(a, indices: np.ndarray, axis: int) -> Tensor:
    a = _as_tensor(a)
    indices = np.asarray(indices, dtype=np.intp)
    if indices.ndim != a.ndim:
        raise ShapeError(
            f"take_along_axis: indices ndim {indices.ndim} != tensor ndim {a.ndim}")

    def bw(g):
        full = np.zeros_like(a.data)
        grids = list(np.indices(indices.shape))
        grids[axis % a.ndim] = indices
        np.add.at(full, tuple(grids), g)
        return (full,)

    return _make("take_along_axis", np.take_along_axis(a.data, indices, axis=axis),
                 (a,), bw)


def embedding(table, indices: np.ndarray) -> Tensor:
    """Row lookup into a (rows, dim) parameter table; backward scatter-adds."""
    table = _as_tensor(table)
    indices = np.asarray(indices, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, indices.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (full,)

    return _make("embedding", table.data[indices], (table,), bw)


# ---------------------------------------------------------------------------
# reductions


def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    a = _as_tensor(a)

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx, a.shape).copy(),)

    return _make("sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.size if axis is None else a.shape[axis]

    def bw(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.shape).copy(),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx / count, a.shape).copy(),)

    return _make("mean", a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a) -> Tensor:
    a = _as_tensor(a)
    return _make("relu", np.maximum(a.data, 0.0), (a,),
                 lambda g: (g * (a.data > 0),))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    return _make("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    y = np.tanh(a.data)
    return _make("tanh", y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    y = np.exp(a.data)
    return _make("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _make("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _make("softmax", y, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"log_softmax: axis {axis} invalid for shape {a.shape}")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    y = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return _make("log_softmax", y, (a,), bw)


# ---------------------------------------------------------------------------
# composite primitives with analytic backward rules


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis then apply per-feature scale and shift."""
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise ShapeError(
            f"layer_norm: scale/shift must have shape ({x.shape[-1]},), "
            f"got {gamma.shape} and {beta.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv

    def bw(g):
        axes = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gx = g * gamma.data
        m1 = gx.mean(axis=-1, keepdims=True)
        m2 = (gx * xhat).mean(axis=-1, keepdims=True)
        dx = (gx - m1 - xhat * m2) * inv
        return dx, dgamma, dbeta

    return _make("layer_norm", gamma.data * xhat + beta.data, (x, gamma, beta), bw)


def cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood (natural log) of integer labels.

    ``logits`` is (N, C); ``labels`` is (N,) of ints in [0, C).
    """
    logits = _as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(
            f"cross_entropy: expected (N, C) logits and (N,) labels, "
            f"got {logits.shape} and {labels.shape}")
    n = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()

    def bw(g):
        dz = np.exp(logp)
        dz[np.arange(n), labels] -= 1.0
        return (g * dz / n,)

    return _make("cross_entropy", np.float64(loss), (logits,), bw)


def dropout(x, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Seeded Bernoulli mask scaled by 1/(1-p); identity in evaluation mode."""
    x = _as_tensor(x)
    if not training or p <= 0.0:
        return _make("dropout", x.data.copy(), (x,), lambda g: (g,))
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _make("dropout", x.data * mask, (x,), lambda g: (g * mask,))


def conv1d(x, weight, bias) -> Tensor:
    """Same-padded 1-d convolution along the middle axis.

    ``x`` is (B, T, C_in), ``weight`` is (K, C_in, C_out), ``bias`` is (C_out,).
    """
    x, weight, bias = _as_tensor(x), _as_tensor(weight), _as_tensor(bias)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"conv1d: got input {x.shape} and kernel {weight.shape}")
    k = weight.shape[0]
    half = k // 2
    b_, t_, cin = x.shape
    xp = np.zeros((b_, t_ + k - 1, cin))
    xp[:, half:half + t_] = x.data
    out = np.zeros((b_, t_, weight.shape[2]))
    for j in range(k):
        out += xp[:, j:j + t_] @ weight.data[j]
    out += bias.data

    def bw(g):
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(weight.data)
        for j in range(k):
            dxp[:, j:j + t_] += g @ weight.data[j].T
            dw[j] = np.einsum("btc,btd->cd", xp[:, j:j + t_], g)
        db = g.sum(axis=(0, 1))
        return dxp[:, half:half + t_], dw, db

    return _make("conv1d", out, (x, weight, bias), bw)

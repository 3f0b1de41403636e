"""Parameterized layers built on the tape primitives.

Layers hold their parameters as ``Tensor`` objects with ``requires_grad=True``
and expose them through ``parameters()`` as ``(name, tensor)`` pairs so
optimizers and checkpoint writers can walk a model uniformly.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor


def _param(rng: np.random.Generator, shape, scale: float | None = None) -> Tensor:
    if scale is None:
        fan_in = shape[0] if len(shape) > 1 else max(shape[0], 1)
        scale = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


class Module:
    """Minimal parameter container; submodules found by attribute walk."""

    def parameters(self):
        seen = set()
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                for sub, p in value.parameters():
                    if id(p) not in seen:
                        seen.add(id(p))
                        yield f"{name}.{sub}", p
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        for sub, p in item.parameters():
                            if id(p) not in seen:
                                seen.add(id(p))
                                yield f"{name}.{i}.{sub}", p

    def zero_grad(self):
        for _, p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, rng, d_in: int, d_out: int, zero_bias: bool = True):
        self.w = _param(rng, (d_in, d_out))
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if zero_bias \
            else _param(rng, (d_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)


class MLP(Module):
    """Stack of linear layers with relu between them (not after the last)."""

    def __init__(self, rng, dims):
        self.layers = [Linear(rng, dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i + 1 < len(self.layers):
                x = T.relu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q kᵀ / sqrt(d_k)) v over the last two axes."""
    d_k = q.shape[-1]
    scores = T.mul(T.matmul(q, _swap_last(k)), 1.0 / math.sqrt(d_k))
    return T.matmul(T.softmax(scores, axis=-1), v)


def _swap_last(t: Tensor) -> Tensor:
    axes = list(range(t.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return T.transpose(t, tuple(axes))


class MultiHeadAttention(Module):
    """Standard multi-head attention; query and key/value sources may differ."""

    def __init__(self, rng, d_model: int, n_heads: int):
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(rng, d_model, d_model)
        self.wk = Linear(rng, d_model, d_model)
        self.wv = Linear(rng, d_model, d_model)
        self.wo = Linear(rng, d_model, d_model)

    def _split(self, x: Tensor, batch: int, t: int) -> Tensor:
        x = T.reshape(x, (batch, t, self.n_heads, self.d_head))
        return T.transpose(x, (0, 2, 1, 3))

    def __call__(self, query: Tensor, kv: Tensor) -> Tensor:
        b, tq, d = query.shape
        tk = kv.shape[1]
        q = self._split(self.wq(query), b, tq)
        k = self._split(self.wk(kv), b, tk)
        v = self._split(self.wv(kv), b, tk)
        out = scaled_dot_product_attention(q, k, v)
        out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, tq, d))
        return self.wo(out)


class TransformerLayer(Module):
    """Post-norm encoder layer: self-attention and position-wise FFN."""

    def __init__(self, rng, d_model: int, n_heads: int, d_ff: int, p_drop: float):
        self.attn = MultiHeadAttention(rng, d_model, n_heads)
        self.norm1 = LayerNorm(d_model)
        self.ff1 = Linear(rng, d_model, d_ff)
        self.ff2 = Linear(rng, d_ff, d_model)
        self.norm2 = LayerNorm(d_model)
        self.p_drop = p_drop

    def __call__(self, x: Tensor, rng: np.random.Generator, training: bool) -> Tensor:
        a = T.dropout(self.attn(x, x), self.p_drop, rng, training)
        x = self.norm1(T.add(x, a))
        h = self.ff2(T.relu(self.ff1(x)))
        h = T.dropout(h, self.p_drop, rng, training)
        return self.norm2(T.add(x, h))


class GRUCell(Module):
    """Three-gate GRU: update z, reset r, candidate n.

    h' = (1 - z) * h + z * n with n = tanh(x Wn + (r * h) Un + bn).
    """

    def __init__(self, rng, d_in: int, d_hidden: int):
        self.wz = Linear(rng, d_in, d_hidden)
        self.uz = Linear(rng, d_hidden, d_hidden)
        self.wr = Linear(rng, d_in, d_hidden)
        self.ur = Linear(rng, d_hidden, d_hidden)
        self.wn = Linear(rng, d_in, d_hidden)
        self.un = Linear(rng, d_hidden, d_hidden)
        self.d_hidden = d_hidden

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        z = T.sigmoid(T.add(self.wz(x), self.uz(h)))
        r = T.sigmoid(T.add(self.wr(x), self.ur(h)))
        n = T.tanh(T.add(self.wn(x), self.un(T.mul(r, h))))
        one_minus_z = T.sub(1.0, z)
        return T.add(T.mul(one_minus_z, h), T.mul(z, n))

    def run(self, xs: Tensor) -> Tensor:
        """Run over a (B, L, d_in) sequence; returns the final (B, d) hidden state."""
        b = xs.shape[0]
        h = Tensor(np.zeros((b, self.d_hidden)))
        for step in range(xs.shape[1]):
            x = T.reshape(T.narrow(xs, 1, step, 1), (b, xs.shape[2]))
            h = self(x, h)
        return h


class Conv1dBlock(Module):
    """Same-padded conv + batch norm + relu with a residual connection."""

    def __init__(self, rng, d_model: int, kernel: int, momentum: float = 0.9):
        self.w = _param(rng, (kernel, d_model, d_model))
        self.b = Tensor(np.zeros(d_model), requires_grad=True)
        self.gamma = Tensor(np.ones(d_model), requires_grad=True)
        self.beta = Tensor(np.zeros(d_model), requires_grad=True)
        self.running_mean = np.zeros(d_model)
        self.running_var = np.ones(d_model)
        self.momentum = momentum

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = T.conv1d(x, self.w, self.b)
        if training:
            m = h.data.mean(axis=(0, 1))
            v = h.data.var(axis=(0, 1)) + 1e-5
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * m
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * v
        else:
            m, v = self.running_mean, self.running_var + 1e-5
        h = T.div(T.sub(h, Tensor(m)), Tensor(np.sqrt(v)))
        h = T.add(T.mul(h, self.gamma), self.beta)
        return T.relu(T.add(x, h))


def positional_encoding(t: int, d_model: int, offset: int = 0) -> np.ndarray:
    """Sinusoidal position table for absolute positions offset..offset+t-1."""
    pos = np.arange(offset, offset + t)[:, None]
    i = np.arange(d_model)[None, :]
    angles = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    enc = np.zeros((t, d_model))
    enc[:, 0::2] = np.sin(angles[:, 0::2])
    enc[:, 1::2] = np.cos(angles[:, 1::2])
    return enc

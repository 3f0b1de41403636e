"""Central finite-difference gradient oracle shared across test modules."""

import numpy as np

from timemoe.autodiff import Tape
from timemoe.autodiff import tensor as T


def numeric_grad(fn, tensors, index, h=1e-5):
    """d fn / d tensors[index] by central differences, elementwise."""
    base = tensors[index]
    grad = np.zeros_like(base.data)
    flat = base.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn(*tensors).data)
        flat[i] = orig - h
        down = float(fn(*tensors).data)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_gradients(fn, tensors, rtol=1e-4, atol=1e-7, h=1e-5):
    """Compare tape gradients of scalar fn(*tensors) against central differences.

    Elements with |analytic| < 1e-8 are compared absolutely within atol,
    the rest relatively within rtol.
    """
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        out = fn(*tensors)
        tape.backward(out)
    for idx, t in enumerate(tensors):
        if not t.requires_grad:
            continue
        num = numeric_grad(fn, tensors, idx, h=h)
        ana = t.grad if t.grad is not None else np.zeros_like(t.data)
        small = np.abs(ana) < 1e-8
        assert np.allclose(ana[small], num[small], atol=atol), \
            f"tensor {idx}: absolute mismatch {np.abs(ana[small] - num[small]).max()}"
        big = ~small
        if big.any():
            rel = np.abs(ana[big] - num[big]) / np.abs(ana[big])
            assert rel.max() < rtol, f"tensor {idx}: relative error {rel.max()}"


def scalarize(x):
    """Reduce any tensor to a scalar with nontrivial weights for grad checks."""
    w = np.cos(np.arange(x.size)).reshape(x.shape)
    return T.sum(T.mul(x, w))

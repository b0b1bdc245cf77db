"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Just enough ops for a transformer encoder: linear maps, batched matmul,
layer norm, masked softmax, GELU, dropout, masked mean pooling, and the
elementwise arithmetic needed for losses. Each op records vector-Jacobian
closures; backward() walks the tape in reverse topological order.
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Tensor:
    __slots__ = ("value", "grad", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def constant(value) -> Tensor:
    return Tensor(value)


def add(a: Tensor, b: Tensor) -> Tensor:
    assert a.value.shape == b.value.shape
    return Tensor(a.value + b.value, ((a, lambda g: g), (b, lambda g: g)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    assert a.value.shape == b.value.shape
    return Tensor(a.value - b.value, ((a, lambda g: g), (b, lambda g: -g)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    assert a.value.shape == b.value.shape
    return Tensor(a.value * b.value,
                  ((a, lambda g: g * b.value), (b, lambda g: g * a.value)))


def scale(a: Tensor, c: float) -> Tensor:
    return Tensor(a.value * c, ((a, lambda g: g * c),))


def square(a: Tensor) -> Tensor:
    return Tensor(a.value ** 2, ((a, lambda g: 2.0 * a.value * g),))


def mean_all(a: Tensor) -> Tensor:
    size = a.value.size
    return Tensor(a.value.mean(), ((a, lambda g: np.full_like(a.value, g / size)),))


def reshape(a: Tensor, shape) -> Tensor:
    old = a.value.shape
    return Tensor(a.value.reshape(shape), ((a, lambda g: g.reshape(old)),))


def transpose(a: Tensor, axes) -> Tensor:
    inverse = np.argsort(axes)
    return Tensor(a.value.transpose(axes), ((a, lambda g: g.transpose(inverse)),))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the last axis; x may have any number of leading axes."""
    y = x.value @ w.value + b.value

    def vjp_x(g):
        return g @ w.value.T

    def vjp_w(g):
        x2 = x.value.reshape(-1, x.value.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return x2.T @ g2

    def vjp_b(g):
        return g.reshape(-1, g.shape[-1]).sum(axis=0)

    return Tensor(y, ((x, vjp_x), (w, vjp_w), (b, vjp_b)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matmul; leading axes of a and b must match exactly."""
    assert a.value.shape[:-2] == b.value.shape[:-2]
    y = a.value @ b.value

    def vjp_a(g):
        return g @ np.swapaxes(b.value, -1, -2)

    def vjp_b(g):
        return np.swapaxes(a.value, -1, -2) @ g

    return Tensor(y, ((a, vjp_a), (b, vjp_b)))


def gelu(x: Tensor) -> Tensor:
    cdf = 0.5 * (1.0 + erf(x.value * _INV_SQRT2))
    y = x.value * cdf
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.value ** 2)
    local = cdf + x.value * pdf
    return Tensor(y, ((x, lambda g: g * local),))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    mu = x.value.mean(axis=-1, keepdims=True)
    var = x.value.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv
    y = xhat * gain.value + bias.value

    def vjp_x(g):
        gh = g * gain.value
        d = x.value.shape[-1]
        term = gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
        return inv * term

    def vjp_gain(g):
        return (g * xhat).reshape(-1, g.shape[-1]).sum(axis=0)

    def vjp_bias(g):
        return g.reshape(-1, g.shape[-1]).sum(axis=0)

    return Tensor(y, ((x, vjp_x), (gain, vjp_gain), (bias, vjp_bias)))


def softmax_masked(scores: Tensor, additive_bias: np.ndarray) -> Tensor:
    """Softmax over the last axis of scores + additive_bias (bias has no gradient)."""
    z = scores.value + additive_bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return p * (g - (g * p).sum(axis=-1, keepdims=True))

    return Tensor(p, ((scores, vjp),))


def dropout(x: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout with a caller-supplied generator (train mode only)."""
    if p <= 0.0:
        return x
    keep = (rng.random(x.value.shape) >= p) / (1.0 - p)
    return Tensor(x.value * keep, ((x, lambda g: g * keep),))


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over the row axis of x (B, R, D) restricted to mask (B, R) True rows."""
    counts = mask.sum(axis=1)
    assert np.all(counts > 0)
    m = mask[:, :, None].astype(np.float64)
    y = (x.value * m).sum(axis=1) / counts[:, None]

    def vjp(g):
        return (g[:, None, :] / counts[:, None, None]) * m

    return Tensor(y, ((x, vjp),))


def backward(out: Tensor) -> None:
    """Accumulate gradients of a scalar output into every reachable tensor."""
    assert out.value.ndim == 0, "backward expects a scalar"
    order = []
    seen = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    for node in order:
        node.grad = None
    out.grad = np.ones(())
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g

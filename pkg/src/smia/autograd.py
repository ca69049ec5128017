"""Minimal reverse-mode automatic differentiation over numpy arrays.

Everything is float64. A `Tensor` wraps an ndarray plus a closure that
propagates the output gradient to its parents; `Tensor.backward` walks the
graph in reverse topological order. Only the handful of ops needed by the
reference models and attack objectives are implemented.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """Node in the computation graph.

    Leaf tensors are created directly from arrays; op results carry a
    backward closure. Gradients are accumulated into ``.grad`` (same shape
    as ``.data``) by ``backward``.
    """

    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, leaf={self._backward_fn is None})"

    # -- graph traversal -------------------------------------------------

    def _topo_order(self):
        order, seen, stack = [], set(), [(self, False)]
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
                stack.append((p, False))
        return order

    def backward(self, seed=None):
        """Accumulate d(self)/d(node) into every node of the graph.

        ``seed`` defaults to ones (scalar outputs); pass an explicit array
        to backpropagate a directional seed (e.g. one-hot over logits).
        Grads of all nodes reachable from ``self`` are reset first, so the
        same graph may be backpropagated repeatedly with different seeds.
        """
        order = self._topo_order()
        for node in order:
            node.grad = np.zeros_like(node.data)
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar output")
            self.grad = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ValueError(f"seed shape {seed.shape} != output shape {self.data.shape}")
            self.grad = seed.copy()
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)

    # -- operators -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x):
    """Graph constant: participates in forward math, receives no gradient."""
    return Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        a.grad += _unbroadcast(g, a.data.shape)
        b.grad += _unbroadcast(g, b.data.shape)

    return Tensor(out_data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        a.grad += _unbroadcast(g * b.data, a.data.shape)
        b.grad += _unbroadcast(g * a.data, b.data.shape)

    return Tensor(out_data, (a, b), bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def bw(g):
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    return Tensor(out_data, (a, b), bw)


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0

    def bw(g):
        a.grad += g * mask

    return Tensor(a.data * mask, (a,), bw)


def reshape(a, shape):
    a = as_tensor(a)
    orig = a.data.shape

    def bw(g):
        a.grad += g.reshape(orig)

    return Tensor(a.data.reshape(shape), (a,), bw)


def sum_all(a):
    a = as_tensor(a)

    def bw(g):
        a.grad += np.full(a.data.shape, float(g))

    return Tensor(a.data.sum(), (a,), bw)


def softmax(a, axis=1):
    """Numerically stable softmax along `axis` (log-sum-exp shifted)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        a.grad += p * (g - (g * p).sum(axis=axis, keepdims=True))

    return Tensor(p, (a,), bw)


def log_softmax(a, axis=1):
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    lp = shifted - lse

    def bw(g):
        a.grad += g - np.exp(lp) * g.sum(axis=axis, keepdims=True)

    return Tensor(lp, (a,), bw)


def conv2d(x, w, b, pad):
    """Zero-padded stride-1 cross-correlation.

    x: (N, C, H, W), w: (O, C, kh, kw), b: (O,). Output (N, O, H', W') with
    H' = H + 2*pad - kh + 1.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    n, c, h, wd = x.data.shape
    o, c2, kh, kw = w.data.shape
    if c != c2:
        raise ValueError(f"conv2d channel mismatch: input {c}, weight {c2}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    out = np.einsum("nchwij,ocij->nohw", cols, w.data, optimize=True)
    out = out + b.data[None, :, None, None]
    oh, ow = out.shape[2], out.shape[3]

    def bw(g):
        w.grad += np.einsum("nchwij,nohw->ocij", cols, g, optimize=True)
        b.grad += g.sum(axis=(0, 2, 3))
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + oh, j:j + ow] += np.einsum(
                    "nohw,oc->nchw", g, w.data[:, :, i, j], optimize=True)
        if pad:
            x.grad += gxp[:, :, pad:-pad, pad:-pad]
        else:
            x.grad += gxp

    return Tensor(out, (x, w, b), bw)


def maxpool2(x):
    """2x2 max pooling, stride 2. Spatial dims must be even; ties route the
    gradient to the first maximal element."""
    x = as_tensor(x)
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    xr = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = xr.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        x.grad += gx.reshape(n, c, h, w)

    return Tensor(out, (x,), bw)


def upsample2(x):
    """Nearest-neighbour 2x upsampling."""
    x = as_tensor(x)
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.data.shape

    def bw(g):
        x.grad += g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

    return Tensor(out, (x,), bw)


def concat_channels(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ca = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def bw(g):
        a.grad += g[:, :ca]
        b.grad += g[:, ca:]

    return Tensor(out, (a, b), bw)


def _reflect_indices(n, r):
    """Indices implementing mirror padding without border repetition."""
    if r >= n:
        raise ValueError(f"reflect pad radius {r} too large for extent {n}")
    return np.pad(np.arange(n), (r, r), mode="reflect")


def reflect_pad2(x, r):
    """Reflect-pad the two trailing spatial axes by radius `r`."""
    x = as_tensor(x)
    if r == 0:
        def bw0(g):
            x.grad += g
        return Tensor(x.data.copy(), (x,), bw0)
    h, w = x.data.shape[-2], x.data.shape[-1]
    rows = _reflect_indices(h, r)
    cols = _reflect_indices(w, r)
    out = x.data[..., rows, :][..., :, cols]

    def bw(g):
        tmp = np.zeros(x.data.shape[:-2] + (h + 2 * r, w), dtype=np.float64)
        np.add.at(tmp, (Ellipsis, slice(None), cols), g)
        gx = np.zeros_like(x.data)
        np.add.at(gx, (Ellipsis, rows, slice(None)), tmp)
        x.grad += gx

    return Tensor(out, (x,), bw)


def kernel_corr2_valid(x, kernel):
    """Depthwise valid cross-correlation with one fixed 2D kernel.

    The kernel is a plain array (no gradient); the same kernel is applied
    to every channel independently.
    """
    x = as_tensor(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    kh, kw = kernel.shape
    cols = np.lib.stride_tricks.sliding_window_view(x.data, (kh, kw), axis=(-2, -1))
    out = np.einsum("...ij,ij->...", cols, kernel, optimize=True)
    oh, ow = out.shape[-2], out.shape[-1]

    def bw(g):
        gx = np.zeros_like(x.data)
        for i in range(kh):
            for j in range(kw):
                gx[..., i:i + oh, j:j + ow] += g * kernel[i, j]
        x.grad += gx

    return Tensor(out, (x,), bw)

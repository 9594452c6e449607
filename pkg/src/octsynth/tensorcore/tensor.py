"""Reverse-mode autodiff over dense numpy arrays.

Each operation computes its forward value eagerly and, while gradients are
enabled, records a closure that scatters the upstream gradient back to its
parents. ``Tensor.backward()`` walks the recorded graph in reverse
topological order. Inputs are never mutated; only ``.grad`` fields are
written during backpropagation.

Broadcasting is supported in elementwise ops to the extent numpy allows it;
gradients are reduced back to the parent shape by summing over broadcast
axes.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ShapeError

_GRAD_ENABLED = True


def is_grad_enabled():
    return _GRAD_ENABLED


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode); restores the flag on exit."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A dense array plus an optional gradient and autograd bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def accumulate_grad(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Backpropagate from this tensor; defaults to d(self)/d(self) = 1 for scalars."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(f"backward() without a gradient requires a scalar, got shape {self.data.shape}")
            grad = np.ones_like(self.data)
        topo = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Operator sugar used by network code; scalars become constants.
    def __add__(self, other):
        return add(self, as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other, self.dtype))

    def __mul__(self, other):
        return mul(self, as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(as_tensor(other, self.dtype), self)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward(out)
    return out


def _unbroadcast(g, shape):
    """Sum gradient ``g`` over the axes that were broadcast from ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(out):
        def fn(g):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g, b.data.shape))
        return fn

    return _make(data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bw(out):
        def fn(g):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(-g, b.data.shape))
        return fn

    return _make(data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(out):
        def fn(g):
            if a.requires_grad:
                a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))
        return fn

    return _make(data, (a, b), bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul expects (N,D) @ (D,E); got {a.data.shape} and {b.data.shape}")
    data = a.data @ b.data

    def bw(out):
        def fn(g):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)
        return fn

    return _make(data, (a, b), bw)


def linear(x, w, b):
    """Affine map x @ w + b for x (N,D), w (D,E), b (E)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if b.data.ndim != 1 or b.data.shape[0] != w.data.shape[1]:
        raise ShapeError(f"linear bias shape {b.data.shape} does not match weight {w.data.shape}")
    return add(matmul(x, w), b)


def _sigmoid(x):
    # tanh form is overflow-safe for any |x| and vectorizes well.
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    """x * sigmoid(x), elementwise."""
    x = as_tensor(x)
    s = _sigmoid(x.data)
    data = x.data * s

    def bw(out):
        def fn(g):
            if x.requires_grad:
                x.accumulate_grad(g * (s + x.data * s * (1.0 - s)))
        return fn

    return _make(data, (x,), bw)


def avgpool2(x):
    """2x2 mean pooling; both spatial extents must be even."""
    x = as_tensor(x)
    n, c, h, w = _expect_nchw(x, "avgpool2")
    if h % 2 != 0 or w % 2 != 0:
        raise ShapeError(f"avgpool2 requires even spatial extents, got input shape {x.data.shape}")
    data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(out):
        def fn(g):
            if x.requires_grad:
                gx = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
                x.accumulate_grad(gx)
        return fn

    return _make(data, (x,), bw)


def upsample2_nearest(x):
    """Nearest-neighbor 2x upsampling of both spatial extents."""
    x = as_tensor(x)
    n, c, h, w = _expect_nchw(x, "upsample2_nearest")
    data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bw(out):
        def fn(g):
            if x.requires_grad:
                gx = g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))
                x.accumulate_grad(gx)
        return fn

    return _make(data, (x,), bw)


def _expect_nchw(x, opname):
    if x.data.ndim != 4:
        raise ShapeError(f"{opname} expects a (N,C,H,W) tensor, got shape {x.data.shape}")
    return x.data.shape


def _im2col(xpad, kh, kw, stride):
    """Unfold patches to a (C*kh*kw, N*OH*OW) matrix via kh*kw slab copies."""
    n, c, hp, wp = xpad.shape
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    cols = np.empty((c, kh, kw, n, oh, ow), dtype=xpad.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xpad[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * oh * ow), oh, ow


def _col2im(dcols, shape_pad, kh, kw, stride, oh, ow):
    """Adjoint of _im2col: scatter-add column gradients back onto the padded grid."""
    n, c, hp, wp = shape_pad
    g6 = dcols.reshape(c, kh, kw, n, oh, ow)
    dxpad = np.zeros(shape_pad, dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxpad[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += g6[:, i, j].transpose(1, 0, 2, 3)
    return dxpad


def conv2d(x, kernel, bias, stride=1, padding=0):
    """Cross-correlation of x (N,C,H,W) with kernel (F,C,kh,kw) plus bias (F,)."""
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    n, c, h, w = _expect_nchw(x, "conv2d")
    if kernel.data.ndim != 4:
        raise ShapeError(f"conv2d kernel must be (F,C,kh,kw), got shape {kernel.data.shape}")
    f, ck, kh, kw = kernel.data.shape
    if ck != c:
        raise ShapeError(f"conv2d channel mismatch: input shape {x.data.shape} vs kernel shape {kernel.data.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel extents must be odd, got kernel shape {kernel.data.shape}")
    if bias.data.shape != (f,):
        raise ShapeError(f"conv2d bias shape {bias.data.shape} does not match kernel shape {kernel.data.shape}")
    if padding < 0 or stride < 1:
        raise ValueError(f"conv2d requires padding >= 0 and stride >= 1, got padding={padding} stride={stride}")
    if (h + 2 * padding - kh) % stride != 0 or (w + 2 * padding - kw) % stride != 0:
        raise ShapeError(
            f"conv2d output extents not integral for input {x.data.shape}, kernel {kernel.data.shape}, "
            f"stride={stride}, padding={padding}"
        )

    if padding > 0:
        xpad = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xpad = x.data
    cols, oh, ow = _im2col(xpad, kh, kw, stride)  # (C*kh*kw, N*OH*OW)
    wmat = kernel.data.reshape(f, c * kh * kw)
    out2d = wmat @ cols + bias.data[:, None]
    data = np.ascontiguousarray(out2d.reshape(f, n, oh, ow).transpose(1, 0, 2, 3))
    shape_pad = xpad.shape

    def bw(out):
        cols_saved = cols  # reused for the kernel gradient

        def fn(g):
            g2d = g.transpose(1, 0, 2, 3).reshape(f, n * oh * ow)
            if bias.requires_grad:
                bias.accumulate_grad(g2d.sum(axis=1))
            if kernel.requires_grad:
                kernel.accumulate_grad((g2d @ cols_saved.T).reshape(f, c, kh, kw))
            if x.requires_grad:
                dcols = wmat.T @ g2d
                dxpad = _col2im(dcols, shape_pad, kh, kw, stride, oh, ow)
                if padding > 0:
                    dxpad = dxpad[:, :, padding : padding + h, padding : padding + w]
                x.accumulate_grad(dxpad)
        return fn

    return _make(data, (x, kernel, bias), bw)


def group_norm(x, gamma, beta, groups=4, eps=1e-5):
    """Group normalization over (C/groups, H, W) slices with per-channel affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n, c, h, w = _expect_nchw(x, "group_norm")
    if c % groups != 0:
        raise ShapeError(f"group_norm requires channels divisible by groups; got shape {x.data.shape}, groups={groups}")
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ShapeError(f"group_norm affine shapes {gamma.data.shape}/{beta.data.shape} do not match {c} channels")
    m = (c // groups) * h * w
    xg = x.data.reshape(n, groups, m)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat_g = (xg - mu) * inv_std
    xhat = xhat_g.reshape(n, c, h, w)
    data = xhat * gamma.data[None, :, None, None] + beta.data[None, :, None, None]

    def bw(out):
        def fn(g):
            if beta.requires_grad:
                beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
            if gamma.requires_grad:
                gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
            if x.requires_grad:
                dxhat = (g * gamma.data[None, :, None, None]).reshape(n, groups, m)
                term = dxhat - dxhat.mean(axis=2, keepdims=True) - xhat_g * (dxhat * xhat_g).mean(axis=2, keepdims=True)
                x.accumulate_grad((inv_std * term).reshape(n, c, h, w))
        return fn

    return _make(data, (x, gamma, beta), bw)


def concat_channels(a, b):
    """Concatenate two (N,C,H,W) tensors along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    _expect_nchw(a, "concat_channels")
    _expect_nchw(b, "concat_channels")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ShapeError(f"concat_channels extents differ: {a.data.shape} vs {b.data.shape}")
    ca = a.data.shape[1]
    data = np.concatenate([a.data, b.data], axis=1)

    def bw(out):
        def fn(g):
            if a.requires_grad:
                a.accumulate_grad(g[:, :ca])
            if b.requires_grad:
                b.accumulate_grad(g[:, ca:])
        return fn

    return _make(data, (a, b), bw)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def bw(out):
        def fn(g):
            if x.requires_grad:
                x.accumulate_grad(g.reshape(x.data.shape))
        return fn

    return _make(data, (x,), bw)


def tsum(x):
    """Sum of all elements, as a 0-d tensor."""
    x = as_tensor(x)
    data = np.asarray(x.data.sum())

    def bw(out):
        def fn(g):
            if x.requires_grad:
                x.accumulate_grad(np.full_like(x.data, float(g)))
        return fn

    return _make(data, (x,), bw)


def tmean(x):
    """Mean of all elements, as a 0-d tensor."""
    x = as_tensor(x)
    data = np.asarray(x.data.mean())
    inv = 1.0 / x.data.size

    def bw(out):
        def fn(g):
            if x.requires_grad:
                x.accumulate_grad(np.full_like(x.data, float(g) * inv))
        return fn

    return _make(data, (x,), bw)


def softmax_cross_entropy(logits, target):
    """Mean cross entropy of logits (N,C,H,W) against integer classes (N,H,W).

    Returns a 0-d tensor; the gradient with respect to the logits is
    (softmax - onehot) / (N*H*W).
    """
    logits = as_tensor(logits)
    n, c, h, w = _expect_nchw(logits, "softmax_cross_entropy")
    tgt = np.asarray(target)
    if tgt.shape != (n, h, w):
        raise ShapeError(f"target shape {tgt.shape} does not match logits shape {logits.data.shape}")
    if not np.issubdtype(tgt.dtype, np.integer):
        tgt = tgt.astype(np.int64)
    if tgt.min() < 0 or tgt.max() >= c:
        raise ValueError(f"target classes must lie in [0,{c}), got range [{tgt.min()},{tgt.max()}]")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    p = ex / ex.sum(axis=1, keepdims=True)
    idx = tgt[:, None, :, :]
    p_true = np.take_along_axis(p, idx, axis=1)[:, 0]
    count = n * h * w
    data = np.asarray(-np.log(np.maximum(p_true, 1e-300)).sum() / count)

    def bw(out):
        def fn(g):
            if logits.requires_grad:
                grad = p.copy()
                np.put_along_axis(grad, idx, np.take_along_axis(grad, idx, axis=1) - 1.0, axis=1)
                logits.accumulate_grad(grad * (float(g) / count))
        return fn

    return _make(data, (logits,), bw)

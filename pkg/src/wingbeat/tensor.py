"""Minimal reverse-mode autodiff over numpy arrays.

Covers exactly the operations the residual topology needs: conv2d,
batchnorm2d, relu, maxpool2d, dropout, flatten, dense, softmax, residual
add, plus elementwise mul/scale/sum for tests, categorical cross-entropy,
and an Adam optimizer.

Layout is channels-last (NHWC) throughout: images are (N, H, W, C) and
conv kernels are (kh, kw, C_in, C_out).  This keeps the channel axis
contiguous so convolution reduces to one GEMM per kernel tap, which is
what makes training tractable on a single CPU core.

Every op records a closure for its exact backward pass.  Gradients flow
to any tensor that requires_grad or has recorded parents, so gradients at
intermediate activations (needed for Grad-CAM) come for free.  A graph
may be traversed once; call backward on a fresh forward pass each step.
"""

from __future__ import annotations

import threading

import numpy as np

_debug_nan = False
_scratch = threading.local()


def set_debug_nan(enabled: bool) -> None:
    """Toggle the finite-value assertion after every op (slow; for tests)."""
    global _debug_nan
    _debug_nan = enabled


def _pool(shape: tuple, dtype, tag: str) -> np.ndarray:
    """Reusable scratch buffer, keyed by shape/dtype/slot, per thread."""
    store = getattr(_scratch, "buffers", None)
    if store is None:
        store = _scratch.buffers = {}
    key = (shape, np.dtype(dtype), tag)
    buf = store.get(key)
    if buf is None:
        buf = store[key] = np.empty(shape, dtype=dtype)
    return buf


class Tensor:
    """A dense array plus optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward",
                 "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype else None)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _tracked(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    if _debug_nan and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by an op")
    out = Tensor(data)
    if any(p._tracked() for p in parents):
        out._parents = parents
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# convolution

def conv2d(x: Tensor, w: Tensor, b: Tensor, stride=(1, 1),
           padding: str = "same") -> Tensor:
    """2-D cross-correlation, zero 'same' padding, stride fixed at (1, 1).

    x: (N, H, W, C), w: (kh, kw, C, O) with odd kh/kw, b: (O,).
    Output spatial size equals input spatial size.
    """
    if stride != (1, 1):
        raise ValueError(f"only stride (1,1) is supported, got {stride}")
    if padding != "same":
        raise ValueError(f"only 'same' padding is supported, got {padding!r}")
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ValueError(f"conv2d expects 4-D x and w, got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    n, hh, ww, cx = x.shape
    if cx != cin:
        raise ValueError(f"channel mismatch: input {cx}, kernel {cin}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel dims must be odd for same padding, got {kh}x{kw}")
    if b.shape != (cout,):
        raise ValueError(f"bias shape {b.shape} != ({cout},)")

    ph, pw = kh // 2, kw // 2
    dt = x.data.dtype
    xp = np.zeros((n, hh + 2 * ph, ww + 2 * pw, cin), dtype=dt)
    xp[:, ph : ph + hh, pw : pw + ww, :] = x.data
    xf = x.data.reshape(-1, cin)

    out = np.zeros((n, hh, ww, cout), dtype=dt)
    scratch = _pool((n * hh * ww, cout), dt, "conv_fwd")
    sview = scratch.reshape(n, hh, ww, cout)
    for dy in range(kh):
        for dx in range(kw):
            np.matmul(xf, w.data[dy, dx], out=scratch)
            # x[n,y,x] lands at out[n, y - (dy - ph), x - (dx - pw)]
            oy0, oy1 = max(0, ph - dy), min(hh, hh + ph - dy)
            ox0, ox1 = max(0, pw - dx), min(ww, ww + pw - dx)
            iy0, ix0 = oy0 + dy - ph, ox0 + dx - pw
            out[:, oy0:oy1, ox0:ox1, :] += sview[
                :, iy0 : iy0 + (oy1 - oy0), ix0 : ix0 + (ox1 - ox0), :
            ]
    out += b.data

    def backward(g: np.ndarray):
        gf = g.reshape(-1, cout)
        if b._tracked():
            _accum(b, gf.sum(axis=0))
        if w._tracked():
            dw = np.empty_like(w.data)
            slab = _pool((n, hh, ww, cin), dt, "conv_bwd_slab")
            for dy in range(kh):
                for dx in range(kw):
                    np.copyto(slab, xp[:, dy : dy + hh, dx : dx + ww, :])
                    np.matmul(slab.reshape(-1, cin).T, gf, out=dw[dy, dx])
            _accum(w, dw)
        if x._tracked():
            dxp = np.zeros_like(xp)
            sc = _pool((n * hh * ww, cin), dt, "conv_bwd_dx")
            scv = sc.reshape(n, hh, ww, cin)
            for dy in range(kh):
                for dx in range(kw):
                    np.matmul(gf, w.data[dy, dx].T, out=sc)
                    dxp[:, dy : dy + hh, dx : dx + ww, :] += scv
            _accum(x, dxp[:, ph : ph + hh, pw : pw + ww, :])

    return _make(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# batch normalization

class BnState:
    """Running statistics for one batchnorm layer (not trained)."""

    __slots__ = ("mean", "var")

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, state: BnState,
                eps: float = 1e-3, momentum: float = 0.99,
                train: bool = True) -> Tensor:
    """Per-channel batch normalization over (N, H, W) with affine params.

    Train mode normalizes by batch statistics (biased variance) and decays
    the running stats; eval mode normalizes by the running stats.
    """
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm2d expects 4-D input, got {x.shape}")
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must be ({c},), got {gamma.shape}/{beta.shape}")

    if train:
        mean = x.data.mean(axis=(0, 1, 2))
        var = x.data.var(axis=(0, 1, 2))
        state.mean[:] = momentum * state.mean + (1.0 - momentum) * mean
        state.var[:] = momentum * state.var + (1.0 - momentum) * var
    else:
        mean = state.mean.astype(x.data.dtype)
        var = state.var.astype(x.data.dtype)

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv_std
    out = gamma.data * xhat + beta.data

    def backward(g: np.ndarray):
        if beta._tracked():
            _accum(beta, g.sum(axis=(0, 1, 2)))
        if gamma._tracked():
            _accum(gamma, (g * xhat).sum(axis=(0, 1, 2)))
        if x._tracked():
            if train:
                nn = g.shape[0] * g.shape[1] * g.shape[2]
                dxhat = g * gamma.data
                s1 = dxhat.sum(axis=(0, 1, 2))
                s2 = (dxhat * xhat).sum(axis=(0, 1, 2))
                _accum(x, inv_std / nn * (nn * dxhat - s1 - xhat * s2))
            else:
                _accum(x, g * (gamma.data * inv_std))

    return _make(out, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# simple layers

def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g * (out > 0))

    return _make(out, (x,), backward)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; odd trailing rows/cols are dropped."""
    if x.data.ndim != 4:
        raise ValueError(f"maxpool2d expects 4-D input, got {x.shape}")
    n, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ValueError(f"spatial dims {h}x{w} too small to pool")
    tiles = (x.data[:, : 2 * h2, : 2 * w2, :]
             .reshape(n, h2, 2, w2, 2, c)
             .transpose(0, 1, 3, 5, 2, 4)
             .reshape(n, h2, w2, c, 4))
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]

    def backward(g: np.ndarray):
        if x._tracked():
            dtiles = np.zeros((n, h2, w2, c, 4), dtype=g.dtype)
            np.put_along_axis(dtiles, idx[..., None], g[..., None], axis=-1)
            dx = np.zeros_like(x.data)
            dx[:, : 2 * h2, : 2 * w2, :] = (
                dtiles.reshape(n, h2, w2, c, 2, 2)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, 2 * h2, 2 * w2, c)
            )
            _accum(x, dx)

    return _make(out, (x,), backward)


def dropout(x: Tensor, p: float, train: bool,
            rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p) in train mode."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    mask = rng.random(x.shape) >= p
    scale_v = 1.0 / (1.0 - p)
    out = x.data * (mask * scale_v)

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g * mask * scale_v)

    return _make(out, (x,), backward)


def flatten(x: Tensor) -> Tensor:
    n = x.shape[0]
    out = x.data.reshape(n, -1)

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g.reshape(x.shape))

    return _make(out, (x,), backward)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fully connected layer: x (N, D) @ w (D, M) + b (M,)."""
    if x.data.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ValueError(f"dense shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    out = x.data @ w.data + b.data

    def backward(g: np.ndarray):
        if b._tracked():
            _accum(b, g.sum(axis=0))
        if w._tracked():
            _accum(w, x.data.T @ g)
        if x._tracked():
            _accum(x, g @ w.data.T)

    return _make(out, (x, w, b), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        if x._tracked():
            inner = (g * out).sum(axis=axis, keepdims=True)
            _accum(x, out * (g - inner))

    return _make(out, (x,), backward)


def add(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise sum of equal-shape tensors (the residual join)."""
    if x.shape != y.shape:
        raise ValueError(f"add requires equal shapes, got {x.shape} and {y.shape}")
    out = x.data + y.data

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g)
        if y._tracked():
            _accum(y, g)

    return _make(out, (x, y), backward)


def mul(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ValueError(f"mul requires equal shapes, got {x.shape} and {y.shape}")
    out = x.data * y.data

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g * y.data)
        if y._tracked():
            _accum(y, g * x.data)

    return _make(out, (x, y), backward)


def scale(x: Tensor, c: float) -> Tensor:
    out = x.data * c

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, g * c)

    return _make(out, (x,), backward)


def tsum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g: np.ndarray):
        if x._tracked():
            _accum(x, np.broadcast_to(g, x.shape))

    return _make(out, (x,), backward)


def cross_entropy_loss(probs: Tensor, targets: np.ndarray) -> Tensor:
    """Mean categorical cross-entropy against one-hot targets.

    probs rows must already sum to 1 (softmax output); they are clamped to
    [1e-7, 1 - 1e-7] before the log, and the clamp is respected by the
    gradient (zero outside the clamp window).
    """
    targets = np.asarray(targets, dtype=probs.data.dtype)
    if probs.data.ndim != 2 or probs.shape != targets.shape:
        raise ValueError(
            f"probs {probs.shape} and targets {targets.shape} must match (N, K)"
        )
    row_sums = probs.data.sum(axis=1)
    if not np.allclose(row_sums, 1.0, atol=1e-5):
        raise ValueError("probs rows must sum to 1 within 1e-5")
    lo, hi = 1e-7, 1.0 - 1e-7
    clamped = np.clip(probs.data, lo, hi)
    n = probs.shape[0]
    out = np.asarray(-(targets * np.log(clamped)).sum() / n,
                     dtype=probs.data.dtype)

    def backward(g: np.ndarray):
        if probs._tracked():
            inside = (probs.data > lo) & (probs.data < hi)
            _accum(probs, g * (-targets / clamped) * inside / n)

    return _make(out, (probs,), backward)


# ---------------------------------------------------------------------------
# graph traversal

def backward(loss: Tensor) -> None:
    """Reverse-topological gradient sweep from a scalar loss.

    Gradients accumulate into .grad of every tracked tensor.  The graph is
    single-use: a second sweep from the same root raises.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar, got shape {loss.data.shape}")
    if loss._consumed:
        raise RuntimeError("graph already consumed by a previous backward call")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(topo):
        node._consumed = True
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    """Adam with bias correction; grads are cleared after each step."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

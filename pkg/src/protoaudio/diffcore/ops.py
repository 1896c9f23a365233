"""Differentiable operator set.

Exactly the ops the encoders and episode loss need, each with an analytic
backward rule. Layout conventions: feature maps are channels-last, i.e.
conv1d works on (B, L, C) with kernels (K, C, O) and conv2d on (B, H, W, C)
with kernels (KH, KW, C, O). Broadcasting is limited to bias-add over the
last axis; everything else requires explicit matching shapes.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigError, ShapeMismatchError
from .tensor import Tensor, active_tape, as_tensor, guard_finite

# Ops whose gradients the finite-difference suite must cover.
DIFFERENTIABLE_OPS = (
    "add", "sub", "mul", "add_scalar", "mul_scalar", "neg",
    "matmul", "relu", "sigmoid", "tanh", "absval", "log", "clip",
    "sum_all", "mean_pool", "segment_mean", "concat", "reshape", "transpose",
    "slice_rows", "pad_rows", "softmax", "squared_euclidean", "cross_entropy",
    "conv1d", "conv2d", "max_pool1d", "max_pool2d", "sinc_kernel",
)


def _finish(op_name: str, inputs: tuple, out_data: np.ndarray, backward_fn) -> Tensor:
    guard_finite(out_data, op_name)
    out = Tensor(out_data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op_name, inputs, out, backward_fn)
    return out


def _need_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"{op}: shapes {a.data.shape} vs {b.data.shape}")


# -- elementwise -------------------------------------------------------------

def add(a, b) -> Tensor:
    """Elementwise sum; also accepts a 1-D bias broadcast over the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        if not (b.ndim == 1 and a.ndim >= 1 and a.data.shape[-1] == b.data.shape[0]):
            raise ShapeMismatchError(f"add: shapes {a.data.shape} vs {b.data.shape}")

        def bwd_bias(g):
            return g, g.reshape(-1, b.data.shape[0]).sum(axis=0)

        return _finish("add", (a, b), a.data + b.data, bwd_bias)

    def bwd(g):
        return g, g

    return _finish("add", (a, b), a.data + b.data, bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _need_same_shape("sub", a, b)

    def bwd(g):
        return g, -g

    return _finish("sub", (a, b), a.data - b.data, bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _need_same_shape("mul", a, b)

    def bwd(g):
        return g * b.data, g * a.data

    return _finish("mul", (a, b), a.data * b.data, bwd)


def add_scalar(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g,)

    return _finish("add_scalar", (a,), a.data + c, bwd)


def mul_scalar(a, c: float) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g * c,)

    return _finish("mul_scalar", (a,), a.data * c, bwd)


def neg(a) -> Tensor:
    return mul_scalar(a, -1.0)


def relu(a) -> Tensor:
    a = as_tensor(a)
    out = np.maximum(a.data, 0)

    def bwd(g):
        return (g * (a.data > 0),)

    return _finish("relu", (a,), out, bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _finish("sigmoid", (a,), out, bwd)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _finish("tanh", (a,), out, bwd)


def absval(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g * np.sign(a.data),)

    return _finish("absval", (a,), np.abs(a.data), bwd)


def log(a) -> Tensor:
    """Natural log; caller guarantees strictly positive input."""
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def bwd(g):
        return (g / a.data,)

    return _finish("log", (a,), out, bwd)


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient passes only through unclamped entries."""
    a = as_tensor(a)
    out = np.clip(a.data, lo, hi)

    def bwd(g):
        return (g * ((a.data >= lo) & (a.data <= hi)),)

    return _finish("clip", (a,), out, bwd)


# -- reductions & reshapes ---------------------------------------------------

def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (np.broadcast_to(g, a.data.shape),)

    return _finish("sum_all", (a,), np.asarray(a.data.sum()), bwd)


def mean_pool(a, axis: int) -> Tensor:
    """Arithmetic mean over one axis (the axis disappears)."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeMismatchError(f"mean_pool: axis {axis} invalid for shape {a.data.shape}")
    axis = axis % a.ndim
    n = a.data.shape[axis]

    def bwd(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), a.data.shape),)

    return _finish("mean_pool", (a,), a.data.mean(axis=axis), bwd)


def segment_mean(a, lengths: Sequence[int]) -> Tensor:
    """Mean over consecutive row groups of sizes `lengths`; rows must tile a."""
    a = as_tensor(a)
    lens = np.asarray(lengths, dtype=np.int64)
    if lens.ndim != 1 or np.any(lens < 1) or lens.sum() != a.data.shape[0]:
        raise ShapeMismatchError(
            f"segment_mean: lengths {list(lengths)} do not tile {a.data.shape[0]} rows"
        )
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    scale = lens.reshape((-1,) + (1,) * (a.ndim - 1)).astype(a.dtype)
    out = np.add.reduceat(a.data, starts, axis=0) / scale

    def bwd(g):
        return (np.repeat(g / scale, lens, axis=0),)

    return _finish("segment_mean", (a,), out, bwd)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = tuple(as_tensor(t) for t in tensors)
    if not ts:
        raise ShapeMismatchError("concat: need at least one tensor")
    sizes = [t.data.shape[axis] for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _finish("concat", ts, out, bwd)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)

    def bwd(g):
        return (g.reshape(a.data.shape),)

    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatchError(f"reshape: {a.data.shape} -> {shape}") from exc
    return _finish("reshape", (a,), out, bwd)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError(f"transpose: need 2-D, got {a.data.shape}")

    def bwd(g):
        return (g.T,)

    return _finish("transpose", (a,), a.data.T.copy(), bwd)


def slice_rows(a, start: int, stop: int) -> Tensor:
    """Rows [start, stop) along the first axis."""
    a = as_tensor(a)
    if not 0 <= start < stop <= a.data.shape[0]:
        raise ShapeMismatchError(
            f"slice_rows: [{start}, {stop}) invalid for {a.data.shape[0]} rows"
        )

    def bwd(g):
        dz = np.zeros_like(a.data)
        dz[start:stop] = g
        return (dz,)

    return _finish("slice_rows", (a,), a.data[start:stop], bwd)


def pad_rows(a, target_rows: int) -> Tensor:
    """Zero-pad the first axis up to target_rows (appended at the end)."""
    a = as_tensor(a)
    rows = a.data.shape[0]
    if target_rows < rows:
        raise ShapeMismatchError(f"pad_rows: target {target_rows} < rows {rows}")
    if target_rows == rows:
        def bwd_id(g):
            return (g,)
        return _finish("pad_rows", (a,), a.data, bwd_id)
    pad = np.zeros((target_rows - rows,) + a.data.shape[1:], dtype=a.dtype)
    out = np.concatenate([a.data, pad], axis=0)

    def bwd(g):
        return (g[:rows],)

    return _finish("pad_rows", (a,), out, bwd)


# -- linear algebra ------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(f"matmul: shapes {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    return _finish("matmul", (a, b), a.data @ b.data, bwd)


# -- classification head -------------------------------------------------------

def softmax(a) -> Tensor:
    """Shift-by-max softmax over the last axis."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _finish("softmax", (a,), out, bwd)


def squared_euclidean(a, b) -> Tensor:
    """Pairwise squared distances: (Q, d) x (K, d) -> (Q, K)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeMismatchError(f"squared_euclidean: shapes {a.data.shape} vs {b.data.shape}")
    diff = a.data[:, None, :] - b.data[None, :, :]
    out = np.einsum("qkd,qkd->qk", diff, diff)

    def bwd(g):
        scaled = 2.0 * g[:, :, None] * diff
        return scaled.sum(axis=1), -scaled.sum(axis=0)

    return _finish("squared_euclidean", (a, b), out, bwd)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits).

    Log-sum-exp is computed shift-by-max; labels are plain integers, not a
    differentiable input.
    """
    logits = as_tensor(logits)
    lab = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or lab.shape != (logits.data.shape[0],):
        raise ShapeMismatchError(
            f"cross_entropy: logits {logits.data.shape} vs labels {lab.shape}"
        )
    q, k = logits.data.shape
    if lab.min() < 0 or lab.max() >= k:
        raise ShapeMismatchError(f"cross_entropy: label outside [0, {k})")
    m = logits.data.max(axis=-1, keepdims=True)
    z = logits.data - m
    e = np.exp(z)
    s = e.sum(axis=-1, keepdims=True)
    p = e / s
    nll = np.log(s[:, 0]) - z[np.arange(q), lab]
    out = np.asarray(nll.mean())

    def bwd(g):
        d = p.copy()
        d[np.arange(q), lab] -= 1.0
        return (d * (float(g) / q),)

    return _finish("cross_entropy", (logits,), out, bwd)


# -- convolution & pooling -----------------------------------------------------

def conv1d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D convolution: x (B, L, C), w (K, C, O) -> (B, Lo, O)."""
    x, w = as_tensor(x), as_tensor(w)
    bias = as_tensor(b) if b is not None else None
    if x.ndim != 3 or w.ndim != 3 or x.data.shape[2] != w.data.shape[1]:
        raise ShapeMismatchError(f"conv1d: shapes {x.data.shape} vs {w.data.shape}")
    B, L, C = x.data.shape
    K, _, O = w.data.shape
    if bias is not None and bias.data.shape != (O,):
        raise ShapeMismatchError(f"conv1d: bias {bias.data.shape} vs ({O},)")
    Lp = L + 2 * padding
    if Lp < K:
        raise ShapeMismatchError(f"conv1d: padded length {Lp} < kernel {K}")
    Lo = (Lp - K) // stride + 1
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0))) if padding else x.data
    win = sliding_window_view(xp, K, axis=1)[:, ::stride]      # (B, Lo, C, K)
    col = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(B * Lo, K * C)
    wflat = w.data.reshape(K * C, O)
    out = col @ wflat
    if bias is not None:
        out = out + bias.data
    out = out.reshape(B, Lo, O)

    def bwd(g):
        gflat = g.reshape(B * Lo, O)
        dw = (col.T @ gflat).reshape(K, C, O)
        dcol = (gflat @ wflat.T).reshape(B, Lo, K, C)
        dxp = np.zeros((B, Lp, C), dtype=x.dtype)
        for k in range(K):
            dxp[:, k:k + stride * Lo:stride] += dcol[:, :, k]
        dx = dxp[:, padding:padding + L] if padding else dxp
        if bias is None:
            return dx, dw
        return dx, dw, gflat.sum(axis=0)

    inputs = (x, w) if bias is None else (x, w, bias)
    return _finish("conv1d", inputs, out, bwd)


def conv2d(x, w, b=None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution: x (B, H, W, C), w (KH, KW, C, O) -> (B, Ho, Wo, O).

    Implemented as a sum of shifted GEMMs, which keeps the big copies
    sequential (measurably faster than im2col at these sizes).
    """
    x, w = as_tensor(x), as_tensor(w)
    bias = as_tensor(b) if b is not None else None
    if x.ndim != 4 or w.ndim != 4 or x.data.shape[3] != w.data.shape[2]:
        raise ShapeMismatchError(f"conv2d: shapes {x.data.shape} vs {w.data.shape}")
    B, H, W, C = x.data.shape
    KH, KW, _, O = w.data.shape
    if bias is not None and bias.data.shape != (O,):
        raise ShapeMismatchError(f"conv2d: bias {bias.data.shape} vs ({O},)")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if Hp < KH or Wp < KW:
        raise ShapeMismatchError(f"conv2d: padded input ({Hp},{Wp}) < kernel ({KH},{KW})")
    Ho = (Hp - KH) // stride + 1
    Wo = (Wp - KW) // stride + 1
    xp = (np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
          if padding else x.data)
    acc = np.zeros((B * Ho * Wo, O), dtype=x.dtype)
    for kh in range(KH):
        for kw in range(KW):
            xs = xp[:, kh:kh + stride * Ho:stride, kw:kw + stride * Wo:stride, :]
            acc += np.ascontiguousarray(xs).reshape(-1, C) @ w.data[kh, kw]
    if bias is not None:
        acc += bias.data
    out = acc.reshape(B, Ho, Wo, O)

    def bwd(g):
        gflat = np.ascontiguousarray(g).reshape(B * Ho * Wo, O)
        dw = np.zeros_like(w.data)
        dxp = np.zeros((B, Hp, Wp, C), dtype=x.dtype)
        for kh in range(KH):
            for kw in range(KW):
                hs = slice(kh, kh + stride * Ho, stride)
                ws = slice(kw, kw + stride * Wo, stride)
                xs = np.ascontiguousarray(xp[:, hs, ws, :]).reshape(-1, C)
                dw[kh, kw] = xs.T @ gflat
                dxp[:, hs, ws, :] += (gflat @ w.data[kh, kw].T).reshape(B, Ho, Wo, C)
        dx = dxp[:, padding:padding + H, padding:padding + W, :] if padding else dxp
        if bias is None:
            return dx, dw
        return dx, dw, gflat.sum(axis=0)

    inputs = (x, w) if bias is None else (x, w, bias)
    return _finish("conv2d", inputs, out, bwd)


def max_pool1d(x, k: int = 2) -> Tensor:
    """Non-overlapping max pooling over time; a trailing remainder is dropped."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeMismatchError(f"max_pool1d: need (B, L, C), got {x.data.shape}")
    B, L, C = x.data.shape
    L2 = L // k
    if L2 < 1:
        raise ShapeMismatchError(f"max_pool1d: length {L} < pool {k}")
    v = x.data[:, :L2 * k].reshape(B, L2, k, C)
    out = v.max(axis=2)

    def bwd(g):
        idx = v.argmax(axis=2)
        z = np.zeros_like(v)
        np.put_along_axis(z, idx[:, :, None, :], g[:, :, None, :], axis=2)
        dx = np.zeros_like(x.data)
        dx[:, :L2 * k] = z.reshape(B, L2 * k, C)
        return (dx,)

    return _finish("max_pool1d", (x,), out, bwd)


def max_pool2d(x, k: int = 2) -> Tensor:
    """k x k max pooling with stride k; spatial dims must divide evenly."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatchError(f"max_pool2d: need (B, H, W, C), got {x.data.shape}")
    B, H, W, C = x.data.shape
    if H % k or W % k:
        raise ShapeMismatchError(f"max_pool2d: ({H},{W}) not divisible by pool {k}")
    H2, W2 = H // k, W // k
    v = x.data.reshape(B, H2, k, W2, k, C)
    out = v.max(axis=(2, 4))

    def bwd(g):
        vt = np.ascontiguousarray(v.transpose(0, 1, 3, 5, 2, 4)).reshape(B, H2, W2, C, k * k)
        idx = vt.argmax(axis=-1)
        z = np.zeros_like(vt)
        np.put_along_axis(z, idx[..., None], g[..., None], axis=-1)
        dx = z.reshape(B, H2, W2, C, k, k).transpose(0, 1, 4, 2, 5, 3).reshape(B, H, W, C)
        return (np.ascontiguousarray(dx),)

    return _finish("max_pool2d", (x,), out, bwd)


# -- parameterized band-pass kernels --------------------------------------------

def sinc_kernel(f_low, f_high, kernel_len: int, window: Optional[np.ndarray] = None) -> Tensor:
    """Band-pass FIR kernels from normalized cutoffs, shape (F, kernel_len).

    Kernel i is 2*f2*sinc(2*pi*f2*n) - 2*f1*sinc(2*pi*f1*n) over centered taps
    n, times an optional window. Cutoffs are in cycles/sample (Hz / rate).
    """
    f1, f2 = as_tensor(f_low), as_tensor(f_high)
    if f1.ndim != 1 or f1.data.shape != f2.data.shape:
        raise ShapeMismatchError(f"sinc_kernel: cutoffs {f1.data.shape} vs {f2.data.shape}")
    if kernel_len < 1 or kernel_len % 2 == 0:
        raise ConfigError(f"sinc_kernel: kernel_len={kernel_len} must be odd")
    n = (np.arange(kernel_len) - (kernel_len - 1) // 2).astype(f1.dtype)
    if window is None:
        win = np.ones(kernel_len, dtype=f1.dtype)
    else:
        win = np.asarray(window, dtype=f1.dtype)
        if win.shape != (kernel_len,):
            raise ShapeMismatchError(f"sinc_kernel: window {win.shape} vs ({kernel_len},)")

    def lowpass(f):
        return 2.0 * f[:, None] * np.sinc(2.0 * f[:, None] * n[None, :])

    out = (lowpass(f2.data) - lowpass(f1.data)) * win[None, :]

    def bwd(g):
        gw = g * win[None, :]
        two_pi_n = 2.0 * np.pi * n[None, :]
        d2 = (gw * 2.0 * np.cos(two_pi_n * f2.data[:, None])).sum(axis=1)
        d1 = -(gw * 2.0 * np.cos(two_pi_n * f1.data[:, None])).sum(axis=1)
        return d1, d2

    return _finish("sinc_kernel", (f1, f2), out, bwd)

"""NHWC layer primitives with explicit forward caches and backward passes.

Every function works in whatever float dtype it is handed, so the same code
serves float32 training and float64 gradient checks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, tuple]:
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    # (n, ho, wo, c, k, k) -> (n, ho, wo, k, k, c)
    cols = np.ascontiguousarray(win[:, :ho, :wo].transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, k * k * c)
    return cols, (n, ho, wo, xp.shape)


def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def conv2d_forward(x, w, b, stride: int = 1, pad: int = 1):
    """x: (n, h, w, cin); w: (k, k, cin, cout); b: (cout,)."""
    k, _, cin, cout = w.shape
    if x.shape[-1] != cin:
        raise ValueError(f"conv expects {cin} input channels, got {x.shape[-1]}")
    cols, (n, ho, wo, pshape) = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(-1, cout) + b
    return y.reshape(n, ho, wo, cout), (cols, w, stride, pad, x.shape, pshape)


def conv2d_backward(dy, cache, need_dx: bool = True):
    cols, w, stride, pad, xshape, pshape = cache
    k, _, cin, cout = w.shape
    n, ho, wo, _ = dy.shape
    d2 = dy.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(n, ho, wo, k, k, cin)
    dxp = np.zeros(pshape, dtype=dy.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, :, :, i, j]
    h, wdt = xshape[1], xshape[2]
    return dxp[:, pad : pad + h, pad : pad + wdt], dw, db


def dense_forward(x, w, b):
    return x @ w + b, (x, w)


def dense_backward(dy, cache, need_dx: bool = True):
    x, w = cache
    dw = x.T @ dy
    db = dy.sum(axis=0)
    return (dy @ w.T if need_dx else None), dw, db


def avgpool_forward(x, f: int):
    n, h, w, c = x.shape
    if h % f or w % f:
        raise ValueError(f"pool factor {f} does not divide {h}x{w}")
    return x.reshape(n, h // f, f, w // f, f, c).mean(axis=(2, 4)), (x.shape, f)


def avgpool_backward(dy, cache):
    shape, f = cache
    dx = np.repeat(np.repeat(dy, f, axis=1), f, axis=2) / (f * f)
    return dx.reshape(shape)


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def dropout_forward(x, rate: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when ``rng`` is None or rate is 0."""
    if rng is None or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dy, keep):
    return dy if keep is None else dy * keep


def sigmoid(x):
    # Split by sign so large magnitudes never overflow exp.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def log_softmax(z, axis: int = -1):
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax(z, axis: int = -1):
    return np.exp(log_softmax(z, axis))

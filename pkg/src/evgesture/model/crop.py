"""Differentiable square crop-and-resize with bilinear sampling.

Boxes are normalised ``(cx, cy, side)`` where pixel ``i`` spans
``[i, i + 1] / size``. Output sample ``i`` of an ``out``-wide crop reads the
input at pixel-centre coordinate

    u_i = cx * W - s / 2 + (i + 0.5) * s / out - 0.5,   s = side * W,

so a full-image box resampled at the input size reproduces the input.
Coordinates outside the image are clamped to the edge pixels.
"""

from __future__ import annotations

import numpy as np

MIN_SIDE_PX = 2.0


def _axis(center, side_px, size, out):
    """Sample coordinates along one axis plus their derivatives.

    Returns (lo index, frac, du/dcenter, du/dside_px) each shaped (n, out).
    """
    steps = (np.arange(out) + 0.5) / out - 0.5
    u = center[:, None] * size + side_px[:, None] * steps[None, :] - 0.5
    inside = (u >= 0) & (u <= size - 1)
    u = np.clip(u, 0, size - 1)
    lo = np.minimum(np.floor(u).astype(np.int64), max(size - 2, 0))
    frac = u - lo
    du_dc = np.where(inside, float(size), 0.0)
    du_ds = np.where(inside, steps[None, :], 0.0)
    return lo, frac.astype(center.dtype), du_dc, du_ds


def crop_resize(image: np.ndarray, bbox: np.ndarray, out_res: int | tuple[int, int], with_cache: bool = False):
    """Crop ``image`` (n, h, w, c) at ``bbox`` (n, 3) to (n, out_h, out_w, c)."""
    image = np.asarray(image)
    bbox = np.asarray(bbox, dtype=image.dtype)
    if image.ndim != 4 or bbox.shape != (image.shape[0], 3):
        raise ValueError("expected image (n, h, w, c) and bbox (n, 3)")
    if not np.all(np.isfinite(bbox)):
        raise FloatingPointError("non-finite bounding box")
    oh, ow = (out_res, out_res) if np.isscalar(out_res) else out_res
    n, h, w, c = image.shape
    raw_side = bbox[:, 2] * w
    side_px = np.maximum(raw_side, MIN_SIDE_PX)
    y0, fy, dyc, dys = _axis(bbox[:, 1], side_px, h, oh)
    x0, fx, dxc, dxs = _axis(bbox[:, 0], side_px, w, ow)
    b = np.arange(n)[:, None, None]
    yy0, xx0 = y0[:, :, None], x0[:, None, :]
    yy1, xx1 = np.minimum(yy0 + 1, h - 1), np.minimum(xx0 + 1, w - 1)
    i00 = image[b, yy0, xx0]
    i01 = image[b, yy0, xx1]
    i10 = image[b, yy1, xx0]
    i11 = image[b, yy1, xx1]
    wy = fy[:, :, None, None]
    wx = fx[:, None, :, None]
    top = i00 + (i01 - i00) * wx
    bot = i10 + (i11 - i10) * wx
    out = top + (bot - top) * wy
    if not with_cache:
        return out
    cache = dict(
        shape=image.shape, y0=y0, x0=x0, fy=fy, fx=fx,
        corners=(i00, i01, i10, i11),
        dyc=dyc, dys=dys, dxc=dxc, dxs=dxs,
        side_live=raw_side > MIN_SIDE_PX,
    )
    return out, cache


def crop_resize_backward(dout: np.ndarray, cache: dict, need_image_grad: bool = False):
    """Gradients w.r.t. the normalised bbox (and optionally the image)."""
    i00, i01, i10, i11 = cache["corners"]
    n, h, w, c = cache["shape"]
    wy = cache["fy"][:, :, None, None]
    wx = cache["fx"][:, None, :, None]
    # d out / d u (x) and d out / d v (y) per sample.
    d_dx = (1 - wy) * (i01 - i00) + wy * (i11 - i10)
    d_dy = (1 - wx) * (i10 - i00) + wx * (i11 - i01)
    gx = (dout * d_dx).sum(axis=3)  # (n, oh, ow)
    gy = (dout * d_dy).sum(axis=3)
    dbbox = np.zeros((n, 3), dtype=dout.dtype)
    dbbox[:, 0] = (gx * cache["dxc"][:, None, :]).sum(axis=(1, 2))
    dbbox[:, 1] = (gy * cache["dyc"][:, :, None]).sum(axis=(1, 2))
    # side_px = side * w, so d/dside carries a factor of w.
    ds = (gx * cache["dxs"][:, None, :]).sum(axis=(1, 2)) + (gy * cache["dys"][:, :, None]).sum(axis=(1, 2))
    dbbox[:, 2] = np.where(cache["side_live"], ds * w, 0.0)
    if not need_image_grad:
        return dbbox, None
    dimg = np.zeros(cache["shape"], dtype=dout.dtype)
    y0, x0 = cache["y0"][:, :, None], cache["x0"][:, None, :]
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    b = np.broadcast_to(np.arange(n)[:, None, None], (n, y0.shape[1], x0.shape[2]))
    y0b, x0b = np.broadcast_to(y0, b.shape), np.broadcast_to(x0, b.shape)
    y1b, x1b = np.broadcast_to(y1, b.shape), np.broadcast_to(x1, b.shape)
    np.add.at(dimg, (b, y0b, x0b), dout * (1 - wy) * (1 - wx))
    np.add.at(dimg, (b, y0b, x1b), dout * (1 - wy) * wx)
    np.add.at(dimg, (b, y1b, x0b), dout * wy * (1 - wx))
    np.add.at(dimg, (b, y1b, x1b), dout * wy * wx)
    return dbbox, dimg

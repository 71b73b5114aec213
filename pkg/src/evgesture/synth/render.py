from __future__ import annotations

import numpy as np

from .hand import CAPSULES

# Relative reflectance per capsule, drawn in order (thumb on top).
CAPSULE_SHADE = (0.78, 0.68, 0.9, 0.86, 0.82, 1.0, 0.96)


def _segment_distance(px, py, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def render_hand(background: np.ndarray, joints: np.ndarray, scale: float, skin: float) -> np.ndarray:
    """Composite anti-aliased capsules over ``background`` (linear intensity)."""
    h, w = background.shape
    img = background.copy()
    lo = np.floor(joints.min(axis=0) - 8 * scale).astype(int)
    hi = np.ceil(joints.max(axis=0) + 8 * scale).astype(int)
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0] + 1, w), min(hi[1] + 1, h)
    if x0 >= x1 or y0 >= y1:
        return img
    py, px = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    patch = img[y0:y1, x0:x1]
    for (i, j, radius), shade in zip(CAPSULES, CAPSULE_SHADE):
        d = _segment_distance(px, py, joints[i], joints[j])
        cover = np.clip(radius * scale + 0.5 - d, 0.0, 1.0)
        patch *= 1.0 - cover
        patch += cover * (skin * shade)
    return img

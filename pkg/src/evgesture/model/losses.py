from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.gestures import NUM_CLASSES, GestureClass
from .layers import log_softmax, sigmoid
from .network import ForwardOutput


@dataclass
class LossResult:
    bbox: float
    gesture: float
    presence: float
    total: float
    d_logits: np.ndarray
    d_bbox: np.ndarray
    d_presence_logit: np.ndarray


def class_indices(target_class) -> np.ndarray:
    """Validate 1..10 labels and return zero-based indices."""
    t = np.asarray(target_class)
    if t.size and (not np.issubdtype(t.dtype, np.integer) or t.min() < 1 or t.max() > NUM_CLASSES):
        raise ValueError(f"class labels must be integers in 1..{NUM_CLASSES}")
    return t.astype(np.int64) - 1


def softmax_cross_entropy(logits: np.ndarray, target_index: np.ndarray) -> tuple[float, np.ndarray]:
    n = len(logits)
    lp = log_softmax(logits)
    loss = -lp[np.arange(n), target_index].mean()
    d = np.exp(lp)
    d[np.arange(n), target_index] -= 1.0
    return float(loss), d / n


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over (cx, cy, side) and over masked samples; 0 when none are masked in."""
    m = mask.astype(pred.dtype)[:, None]
    count = float(m.sum())
    d = np.zeros_like(pred)
    if count == 0:
        return 0.0, d
    diff = np.where(m > 0, pred - np.nan_to_num(target), 0.0)
    k = pred.shape[1]
    loss = float((diff**2).sum() / (count * k))
    d = 2.0 * diff / (count * k)
    return loss, d.astype(pred.dtype)


def binary_cross_entropy_logits(z: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    # log(1 + e^-|z|) + max(z, 0) - z*y, stable for any z
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    d = (sigmoid(z) - y) / len(z)
    return float(loss.mean()), d


def compute_loss(
    output: ForwardOutput,
    target_bbox: np.ndarray,
    target_class,
    hand_present: np.ndarray | None = None,
    presence_weight: float = 1.0,
) -> LossResult:
    """Masked bbox MSE + cross-entropy + presence BCE, all weighted 1."""
    idx = class_indices(target_class)
    if hand_present is None:
        hand_present = idx != GestureClass.UNTRACKED.index
    hand_present = np.asarray(hand_present, dtype=bool)
    dtype = output.class_logits.dtype
    lb, d_bbox = masked_mse(output.bbox, np.asarray(target_bbox, dtype=dtype), hand_present)
    lg, d_logits = softmax_cross_entropy(output.class_logits, idx)
    lp, d_pres = binary_cross_entropy_logits(output.presence_logit, hand_present.astype(dtype))
    total = lb + lg + presence_weight * lp
    return LossResult(lb, lg, lp, total, d_logits.astype(dtype), d_bbox, (presence_weight * d_pres).astype(dtype))

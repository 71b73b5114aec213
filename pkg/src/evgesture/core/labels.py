from __future__ import annotations

from collections import Counter
from typing import Sequence

import numpy as np

from .gestures import GestureClass
from .surface import WindowConfig, slice_windows

GESTURE_THRESHOLD = 0.6


def aggregate_window_label(
    frame_labels: Sequence[GestureClass],
    threshold: float = GESTURE_THRESHOLD,
    previous_label: GestureClass | None = None,
) -> GestureClass:
    """Collapse the per-frame labels inside one window into a single class.

    The first window of a sequence takes the majority label. Later windows
    switch away from ``previous_label`` only when some other label covers at
    least ``threshold`` of the frames.
    """
    if len(frame_labels) == 0:
        raise ValueError("cannot aggregate an empty label list")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    counts = Counter(GestureClass.parse(g) for g in frame_labels)
    # Most frequent first, lowest encoding breaks ties.
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], int(kv[0])))
    if previous_label is None:
        return ranked[0][0]
    previous_label = GestureClass.parse(previous_label)
    n = len(frame_labels)
    for label, count in ranked:
        if label != previous_label and count / n >= threshold:
            return label
    return previous_label


def window_labels(
    frame_times: np.ndarray,
    frame_labels: Sequence[GestureClass],
    config: WindowConfig,
    duration: int,
    threshold: float = GESTURE_THRESHOLD,
) -> list[GestureClass]:
    """Aggregated label for every full window of a sequence, chained in order."""
    frame_times = np.asarray(frame_times)
    out: list[GestureClass] = []
    prev = None
    for start, end, _k in slice_windows(duration, config):
        lo, hi = np.searchsorted(frame_times, [start, end], side="left")
        labels = frame_labels[lo:hi]
        if len(labels) == 0:
            # Window narrower than the frame period: use the frame in force.
            labels = [frame_labels[max(lo - 1, 0)]]
        prev = aggregate_window_label(labels, threshold, prev)
        out.append(prev)
    return out


def count_transitions(labels: Sequence[GestureClass]) -> int:
    return sum(1 for a, b in zip(labels, labels[1:]) if a != b)

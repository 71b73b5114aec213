from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Square box in pixel-centre coordinates; covers ``[x_min, x_min + side]``."""

    x_min: float
    y_min: float
    side: float

    @property
    def center(self) -> tuple[float, float]:
        return self.x_min + self.side / 2, self.y_min + self.side / 2

    def normalized(self, width: int, height: int) -> np.ndarray:
        """(cx, cy, side) in [0, 1] image units where pixel ``i`` spans ``[i, i+1] / size``."""
        cx, cy = self.center
        return np.array([(cx + 0.5) / width, (cy + 0.5) / height, self.side / width])

    def as_list(self) -> list[float]:
        return [float(self.x_min), float(self.y_min), float(self.side)]


def bbox_from_joints(joints2d, width: int, height: int, wrist_y: float | None = None) -> BBox | None:
    pts = np.asarray(joints2d, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return None
    pts = np.column_stack([np.clip(pts[:, 0], 0, width - 1), np.clip(pts[:, 1], 0, height - 1)])
    if wrist_y is not None:
        # Image rows grow downwards: "below the wrist" means a larger row.
        pts = pts[pts[:, 1] <= min(max(wrist_y, 0), height - 1)]
        if len(pts) == 0:
            return None
    x_lo, y_lo = pts.min(axis=0)
    x_hi, y_hi = pts.max(axis=0)
    side = max(x_hi - x_lo, y_hi - y_lo, 1.0)
    cx, cy = (x_lo + x_hi) / 2, (y_lo + y_hi) / 2
    x_min = cx - side / 2
    y_min = cy - side / 2
    # Translate back inside the image rather than shrinking.
    x_min = min(max(x_min, 0.0), max(width - 1 - side, 0.0))
    y_min = min(max(y_min, 0.0), max(height - 1 - side, 0.0))
    return BBox(float(x_min), float(y_min), float(side))

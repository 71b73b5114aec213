from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import ndimage

from ..sim.esim import FrameSequence
from .bbox import bbox_from_joints
from .hand import WRIST
from .sequence import SynthSequence

ROTATION_RANGE_DEG = (25.0, 40.0)


def draw_rotation(rng: np.random.Generator, lo: float = ROTATION_RANGE_DEG[0], hi: float = ROTATION_RANGE_DEG[1]) -> float:
    """Angle in degrees, magnitude uniform in [lo, hi] with a uniform sign."""
    return float(rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi))


def rotation_matrix(angle_deg: float) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def rotate_points(points: np.ndarray, angle_deg: float, width: int, height: int) -> np.ndarray:
    """Rotate (x, y) points about the image centre."""
    c = np.array([(width - 1) / 2, (height - 1) / 2])
    return (np.asarray(points) - c) @ rotation_matrix(angle_deg).T + c


def rotate_image(image: np.ndarray, angle_deg: float) -> np.ndarray:
    h, w = image.shape
    # Output pixel p samples the input at R^-1 (p - c) + c, in (row, col) order.
    r_inv = rotation_matrix(-angle_deg)
    m = r_inv[::-1, ::-1]
    c = np.array([(h - 1) / 2, (w - 1) / 2])
    offset = c - m @ c
    return ndimage.affine_transform(image, m, offset=offset, order=1, mode="nearest")


def rotate_sequence(seq: SynthSequence, seed: int | None = None, angle_deg: float | None = None) -> tuple[SynthSequence, float]:
    """Rotate every frame and joint of a sequence by one shared random angle."""
    if angle_deg is None:
        angle_deg = draw_rotation(np.random.default_rng(seed))
    fr = seq.frames
    h, w = fr.height, fr.width
    frames = np.stack([rotate_image(f, angle_deg) for f in fr.frames])
    joints = np.stack([rotate_points(j, angle_deg, w, h) for j in seq.joints])
    bboxes = []
    for j, old in zip(joints, seq.bboxes):
        bboxes.append(None if old is None else bbox_from_joints(j, w, h, wrist_y=j[WRIST, 1]))
    rotated = replace(
        seq,
        frames=FrameSequence(np.clip(frames, 0.0, None), fr.timestamps),
        joints=joints,
        bboxes=bboxes,
    )
    return rotated, angle_deg

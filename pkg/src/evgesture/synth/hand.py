"""Planar articulated hand proxy.

Joint angle vector layout (radians)::

    0 wrist orientation (0 = fingers up, positive turns clockwise on screen)
    1-3 index finger chain, relative flexion per segment
    4-5 thumb chain, relative per segment

The proxy also carries a static curled-fingers block so the silhouette
resembles a loose fist with the index extended over the thumb.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

N_ANGLES = 6
ANGLE_LIMITS = np.deg2rad(
    np.array(
        [
            [-60.0, 60.0],
            [-120.0, 30.0],
            [-110.0, 20.0],
            [-100.0, 20.0],
            [-150.0, 60.0],
            [-120.0, 60.0],
        ]
    )
)

# Segment lengths in scene units (pixels at scale 1).
PALM = 9.0
INDEX = (6.5, 4.5, 3.5)
THUMB = (7.5, 6.5)
THUMB_BASE = (2.0, 5.5)  # along palm from wrist, sideways towards +x

JOINT_NAMES = (
    "wrist", "index_mcp", "index_pip", "index_dip", "index_tip",
    "thumb_cmc", "thumb_mcp", "thumb_tip", "fist_top", "fist_side",
)
WRIST = 0

# (joint a, joint b, radius) capsules used for rendering.
CAPSULES = (
    (0, 1, 4.5),
    (8, 9, 3.5),
    (1, 2, 1.8),
    (2, 3, 1.6),
    (3, 4, 1.4),
    (5, 6, 2.0),
    (6, 7, 1.7),
)


@dataclass(frozen=True, eq=False)
class HandPose:
    joint_angles: np.ndarray
    root_position: tuple[float, float] = (32.0, 48.0)
    scale: float = 1.0

    def __post_init__(self) -> None:
        a = np.asarray(self.joint_angles, dtype=np.float64)
        if a.shape != (N_ANGLES,):
            raise ValueError(f"expected {N_ANGLES} joint angles, got shape {a.shape}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "joint_angles", a)
        object.__setattr__(self, "root_position", (float(self.root_position[0]), float(self.root_position[1])))

    def clipped(self) -> "HandPose":
        a = np.clip(self.joint_angles, ANGLE_LIMITS[:, 0], ANGLE_LIMITS[:, 1])
        return replace(self, joint_angles=a)

    def with_angles(self, angles) -> "HandPose":
        return replace(self, joint_angles=np.asarray(angles, dtype=np.float64))


def _direction(theta: float) -> np.ndarray:
    # theta = 0 points up the image (-y); positive rotates towards +x.
    return np.array([np.sin(theta), -np.cos(theta)])


def forward_kinematics(pose: HandPose) -> np.ndarray:
    """Image-plane joint positions, shape (10, 2) as (x, y)."""
    a = pose.joint_angles
    s = pose.scale
    root = np.array(pose.root_position)
    up = _direction(a[0])
    side = np.array([-up[1], up[0]])  # +x when the hand points up
    joints = np.zeros((len(JOINT_NAMES), 2))
    joints[0] = root
    joints[1] = root + s * PALM * up
    theta = a[0]
    p = joints[1]
    for i, length in enumerate(INDEX):
        theta = theta + a[1 + i]
        p = p + s * length * _direction(theta)
        joints[2 + i] = p
    joints[5] = root + s * (THUMB_BASE[0] * up + THUMB_BASE[1] * side)
    theta = a[0]
    p = joints[5]
    for i, length in enumerate(THUMB):
        theta = theta + a[4 + i]
        p = p + s * length * _direction(theta)
        joints[6 + i] = p
    joints[8] = root + s * (7.5 * up - 3.5 * side)
    joints[9] = root + s * (2.5 * up - 4.5 * side)
    return joints


def sigmoid_profile(t_norm, m: float):
    """Rescaled logistic progress curve with ``S(0) = 0``, ``S(0.5) = 0.5``, ``S(1) = 1``."""
    t = np.asarray(t_norm, dtype=np.float64)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t_norm must lie in [0, 1]")
    if m <= 0:
        return t if t.ndim else float(t)
    lo = 1.0 / (1.0 + np.exp(m))
    hi = 1.0 / (1.0 + np.exp(-m))
    s = 1.0 / (1.0 + np.exp(-m * (2.0 * t - 1.0)))
    out = (s - lo) / (hi - lo)
    return out if out.ndim else float(out)


def blend_poses(a: HandPose, b: HandPose, alpha: float) -> HandPose:
    """Linear interpolation in joint-angle space (root and scale included)."""
    if a.joint_angles.shape != b.joint_angles.shape:
        raise ValueError("poses have different skeleton topology")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    angles = (1.0 - alpha) * a.joint_angles + alpha * b.joint_angles
    ra, rb = np.array(a.root_position), np.array(b.root_position)
    root = (1.0 - alpha) * ra + alpha * rb
    scale = (1.0 - alpha) * a.scale + alpha * b.scale
    return HandPose(angles, (root[0], root[1]), scale)


# Key poses expressed as joint angles in degrees.
REST_ANGLES = np.deg2rad([0.0, -50.0, -30.0, -20.0, -11.8, -84.9])
SWIPE_LEFT_ANGLES = np.deg2rad([0.0, -50.0, -30.0, -20.0, -63.1, 0.0])
SWIPE_RIGHT_ANGLES = np.deg2rad([0.0, -50.0, -30.0, -20.0, 23.6, -116.1])
PINCH_ANGLES = np.deg2rad([0.0, -10.0, -80.0, -80.0, -47.4, -6.1])

"""Scripted hand animation rendered into HDR frames with per-frame labels."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core.gestures import GestureClass as G
from ..core.surface import MS
from ..sim.esim import FrameSequence
from .bbox import BBox, bbox_from_joints
from .hand import (
    ANGLE_LIMITS,
    PINCH_ANGLES,
    REST_ANGLES,
    SWIPE_LEFT_ANGLES,
    SWIPE_RIGHT_ANGLES,
    WRIST,
    HandPose,
    blend_poses,
    forward_kinematics,
    sigmoid_profile,
)
from .markov import GestureScript, ScriptEntry
from .render import render_hand
from .scene import CameraPath, SceneConfig, background_view

# Transitions that get a short angle-space cross-fade.
_BLENDED = {G.SWIPE_LEFT, G.SWIPE_RIGHT, G.PINCH, G.DOUBLE_PINCH, G.UNKNOWN}
# Share of an Untracked entry spent leaving (and, separately, re-entering) the frame.
_EXIT_FRACTION = 0.2


@dataclass(frozen=True)
class SynthConfig:
    frame_rate: float = 90.0
    jitter_deg: float = 1.0
    jitter_clip_sigma: float = 3.0
    blend_ns: int = 50 * MS
    blending: bool = True
    velocity_cap_px: float = 6.0  # bound on joint motion per frame across blended transitions
    hand_scale: tuple[float, float] = (1.2, 1.45)
    hand_offset_px: float = 5.0
    wrist_angle_deg: float = 10.0
    skin: tuple[float, float] = (0.8, 1.15)


@dataclass(frozen=True, eq=False)
class SynthSequence:
    frames: FrameSequence
    labels: list[G]
    joints: np.ndarray  # (n_frames, n_joints, 2)
    bboxes: list[BBox | None]
    script: GestureScript | None = None
    duration: int = 2000 * MS

    @property
    def frame_times(self) -> np.ndarray:
        return self.frames.timestamps

    def label_records(self) -> list[dict]:
        """One JSON-serialisable record per frame."""
        return [
            {
                "t_ns": int(t),
                "class": g.name,
                "joints": np.round(j, 4).tolist(),
                "bbox": None if b is None else b.as_list(),
            }
            for t, g, j, b in zip(self.frame_times, self.labels, self.joints, self.bboxes)
        ]


@dataclass(frozen=True)
class _HandSetup:
    rest: HandPose
    skin: float


def _sub_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


def _keypose(base: HandPose, angles: np.ndarray) -> HandPose:
    a = angles.copy()
    a[WRIST] = base.joint_angles[WRIST]
    return base.with_angles(a)


def _program(entry: ScriptEntry, base: HandPose, width: int, height: int, rng: np.random.Generator):
    """Pose as a function of normalised time within one script entry."""
    m = entry.steepness or 8.0
    rest = base
    sl, sr, pinch = (_keypose(base, a) for a in (SWIPE_LEFT_ANGLES, SWIPE_RIGHT_ANGLES, PINCH_ANGLES))

    def move(a, b):
        return lambda u: blend_poses(a, b, sigmoid_profile(u, m))

    def phases(*poses):
        n = len(poses) - 1

        def f(u):
            i = min(int(u * n), n - 1)
            return blend_poses(poses[i], poses[i + 1], sigmoid_profile(u * n - i, m))
        return f

    g = entry.gesture
    if g == G.SWIPE_LEFT:
        return move(rest, sl)
    if g == G.SWIPE_LEFT_RETURN:
        return move(sl, rest)
    if g == G.SWIPE_RIGHT:
        return move(rest, sr)
    if g == G.SWIPE_RIGHT_RETURN:
        return move(sr, rest)
    if g == G.PINCH:
        return move(rest, pinch)
    if g == G.PINCH_RETURN:
        return move(pinch, rest)
    if g == G.DOUBLE_PINCH:
        half_open = blend_poses(pinch, rest, 0.7)
        return phases(rest, pinch, half_open, pinch)
    if g == G.UNKNOWN:
        # Clearly non-zero excursion so it never degenerates into Rest.
        signs = rng.choice([-1.0, 1.0], 6)
        offsets = np.deg2rad(signs * rng.uniform(0.5, 1.0, 6) * [18, 25, 25, 20, 12, 12])
        shift = rng.choice([-1.0, 1.0], 2) * rng.uniform(1, 4, 2)
        x = base.with_angles(base.joint_angles + offsets)
        x = replace(x, root_position=tuple(np.array(base.root_position) + shift)).clipped()
        return phases(rest, x, rest)
    if g == G.UNTRACKED:
        # Leave through the nearest of the bottom/left/right edges and come back.
        direction = [(0.0, 1.0), (-1.0, 0.0), (1.0, 0.0)][rng.integers(3)]
        dist = 1.6 * max(width, height)
        away = replace(base, root_position=tuple(np.array(base.root_position) + dist * np.array(direction)))

        def f(u):
            if u < _EXIT_FRACTION:
                return blend_poses(rest, away, sigmoid_profile(u / _EXIT_FRACTION, m))
            if u > 1 - _EXIT_FRACTION:
                return blend_poses(away, rest, sigmoid_profile((u - 1 + _EXIT_FRACTION) / _EXIT_FRACTION, m))
            return away
        return f
    return lambda u: rest


def _pose_at(script: GestureScript, programs, t: int, cfg: SynthConfig, end_poses) -> HandPose:
    i, entry = script.entry_at(t)
    u = min(max((t - entry.start) / entry.duration, 0.0), 1.0)
    pose = programs[i](u)
    if cfg.blending and i > 0 and t - entry.start < cfg.blend_ns:
        prev = script.entries[i - 1].gesture
        if (prev == G.REST and entry.gesture in _BLENDED) or (entry.gesture == G.REST and prev in _BLENDED):
            alpha = (t - entry.start) / cfg.blend_ns
            pose = blend_poses(end_poses[i - 1], pose, alpha)
    return pose


def frame_times(duration: int, frame_rate: float) -> np.ndarray:
    n = int(round(frame_rate * duration / 1e9))
    return np.rint(np.arange(n) * 1e9 / frame_rate).astype(np.int64)


def synthesize_sequence(
    script: GestureScript,
    scene: SceneConfig,
    frame_rate: float = 90.0,
    seed: int = 0,
    config: SynthConfig | None = None,
    hand: _HandSetup | None = None,
) -> SynthSequence:
    cfg = replace(config or SynthConfig(), frame_rate=frame_rate)
    if script.entries[-1].end > script.total_length:
        raise ValueError("script exceeds sequence length")
    w, h = scene.width, scene.height
    if hand is None:
        hand = sample_hand(scene, seed, cfg)
    base = hand.rest
    programs = [
        _program(e, base, w, h, _sub_rng(seed, 1, i)) for i, e in enumerate(script.entries)
    ]
    end_poses = [p(1.0) for p in programs]
    times = frame_times(script.total_length, cfg.frame_rate)
    camera = CameraPath.sample(scene, script.total_length / 1e9)
    canvas = scene.background()
    jitter_rng = _sub_rng(seed, 2)
    sigma = np.deg2rad(cfg.jitter_deg)

    frames = np.empty((len(times), h, w))
    joints = np.empty((len(times), 10, 2))
    labels: list[G] = []
    bboxes: list[BBox | None] = []
    for k, t in enumerate(times):
        pose = _pose_at(script, programs, int(t), cfg, end_poses)
        if sigma > 0:
            noise = np.clip(jitter_rng.standard_normal(6), -cfg.jitter_clip_sigma, cfg.jitter_clip_sigma)
            pose = pose.with_angles(pose.joint_angles + sigma * noise)
        j = forward_kinematics(pose)
        joints[k] = j
        bg = background_view(scene, camera, t / 1e9, canvas)
        frames[k] = render_hand(bg, j, pose.scale, hand.skin) * scene.brightness_factor
        inside = (j[:, 0] >= 0) & (j[:, 0] <= w - 1) & (j[:, 1] >= 0) & (j[:, 1] <= h - 1)
        _, entry = script.entry_at(int(t))
        labels.append(G.UNTRACKED if not inside.any() else entry.gesture)
        bboxes.append(bbox_from_joints(j if inside.any() else [], w, h, wrist_y=j[WRIST, 1]))
    return SynthSequence(FrameSequence(frames, times), labels, joints, bboxes, script, script.total_length)


def sample_hand(scene: SceneConfig, seed: int, cfg: SynthConfig = SynthConfig()) -> _HandSetup:
    rng = _sub_rng(seed, 0)
    scale = rng.uniform(*cfg.hand_scale)
    off = rng.uniform(-cfg.hand_offset_px, cfg.hand_offset_px, 2)
    root = (scene.width / 2 + off[0], scene.height * 0.78 + off[1])
    angles = REST_ANGLES.copy()
    angles[WRIST] = np.deg2rad(rng.uniform(-cfg.wrist_angle_deg, cfg.wrist_angle_deg))
    pose = HandPose(np.clip(angles, ANGLE_LIMITS[:, 0], ANGLE_LIMITS[:, 1]), root, scale)
    return _HandSetup(pose, float(rng.uniform(*cfg.skin)))

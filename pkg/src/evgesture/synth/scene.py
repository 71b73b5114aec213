from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

# Background canvas is this many times larger than the image so camera motion
# never samples outside it.
CANVAS_FACTOR = 3
FOV_DEG = 60.0


@dataclass(frozen=True)
class SceneConfig:
    width: int = 64
    height: int = 64
    texture_seed: int = 0
    brightness_factor: float = 1.0
    camera_path_seed: int = 0
    yaw_rate_max_deg: float = 30.0
    camera_speed: float = 0.3  # ground-plane units per second
    safe_zone_radius: float = 1.0
    texture_contrast: float = 0.12

    def __post_init__(self) -> None:
        if not 0.5 <= self.brightness_factor <= 4.0:
            raise ValueError("brightness_factor must lie in [0.5, 4.0]")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    def background(self) -> np.ndarray:
        return _texture(self.texture_seed, self.height * CANVAS_FACTOR, self.width * CANVAS_FACTOR, self.texture_contrast)


@lru_cache(maxsize=32)
def _texture(seed: int, h: int, w: int, contrast: float) -> np.ndarray:
    rng = np.random.default_rng(seed)
    coarse = ndimage.gaussian_filter(rng.standard_normal((h, w)), 6.0)
    fine = ndimage.gaussian_filter(rng.standard_normal((h, w)), 1.5)
    tex = coarse / (coarse.std() + 1e-12) + 0.5 * fine / (fine.std() + 1e-12)
    tex = 0.3 + contrast * tex / 1.5
    out = np.clip(tex, 0.05, 0.6)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraPath:
    """Ground-plane position and yaw sampled at arbitrary times."""

    waypoints: np.ndarray  # (n, 2)
    speed: float
    yaw0_deg: float
    yaw_amp_deg: float
    yaw_freq_hz: float
    yaw_phase: float

    @classmethod
    def sample(cls, scene: SceneConfig, duration_s: float) -> "CameraPath":
        rng = np.random.default_rng(scene.camera_path_seed)
        n = 4
        r = scene.safe_zone_radius * np.sqrt(rng.random(n))
        phi = rng.random(n) * 2 * np.pi
        pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        freq = rng.uniform(0.2, 0.6)
        # Peak yaw rate amp * 2*pi*f stays under the configured maximum.
        amp_max = scene.yaw_rate_max_deg / (2 * np.pi * freq)
        amp = rng.uniform(0.3, 1.0) * amp_max
        return cls(pts, scene.camera_speed, rng.uniform(-5, 5), amp, freq, rng.uniform(0, 2 * np.pi))

    def position(self, t_s: float) -> np.ndarray:
        seg = np.diff(self.waypoints, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        total = lengths.sum()
        if total == 0 or self.speed == 0:
            return self.waypoints[0].copy()
        d = (self.speed * t_s) % (2 * total)
        if d > total:  # walk back along the path
            d = 2 * total - d
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        i = min(int(np.searchsorted(cum, d, side="right")) - 1, len(seg) - 1)
        frac = (d - cum[i]) / lengths[i] if lengths[i] > 0 else 0.0
        return self.waypoints[i] + frac * seg[i]

    def yaw_deg(self, t_s: float) -> float:
        return self.yaw0_deg + self.yaw_amp_deg * np.sin(2 * np.pi * self.yaw_freq_hz * t_s + self.yaw_phase)

    def yaw_rate_deg(self, t_s: float) -> float:
        w = 2 * np.pi * self.yaw_freq_hz
        return self.yaw_amp_deg * w * np.cos(w * t_s + self.yaw_phase)


def background_view(scene: SceneConfig, camera: CameraPath, t_s: float, canvas: np.ndarray | None = None) -> np.ndarray:
    """Camera view of the ground texture at time ``t_s``."""
    canvas = scene.background() if canvas is None else canvas
    px_per_deg = scene.width / FOV_DEG
    pos = camera.position(t_s)
    ox = camera.yaw_deg(t_s) * px_per_deg + 4.0 * pos[0]
    oy = 4.0 * pos[1]
    ch, cw = canvas.shape
    y0 = (ch - scene.height) / 2 + oy
    x0 = (cw - scene.width) / 2 + ox
    yy, xx = np.mgrid[0: scene.height, 0: scene.width].astype(np.float64)
    return ndimage.map_coordinates(canvas, [yy + y0, xx + x0], order=1, mode="nearest")

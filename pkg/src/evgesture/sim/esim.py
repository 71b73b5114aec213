"""Frame-to-event conversion with per-pixel log-intensity threshold crossings.

Between two rendered frames the log intensity of every pixel is taken to be
linear in time. Each time it moves one contrast threshold away from the
pixel's reference level an event is emitted at the interpolated crossing
time and the reference moves by one threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.events import EventStream

# Guards level comparisons against log/exp round-off on exact multiples of C.
_CROSSING_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    contrast_threshold_pos: float = 0.2
    contrast_threshold_neg: float = 0.2
    log_eps: float = 1e-3
    noise_rate: float = 0.0  # background events per pixel per second

    def __post_init__(self) -> None:
        if self.contrast_threshold_pos <= 0 or self.contrast_threshold_neg <= 0:
            raise ValueError("contrast thresholds must be positive")
        if self.log_eps <= 0:
            raise ValueError("log_eps must be positive")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be non-negative")


@dataclass(frozen=True, eq=False)
class FrameSequence:
    frames: np.ndarray  # (n, h, w) linear HDR intensity
    timestamps: np.ndarray  # (n,) int64 ns

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if frames.ndim != 3:
            raise ValueError("frames must have shape (n, h, w)")
        if len(frames) < 2 or len(ts) != len(frames):
            raise ValueError("need at least two frames with one timestamp each")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("frame timestamps must be strictly increasing")
        if ts[0] < 0:
            raise ValueError("frame timestamps must be non-negative")
        if not np.all(np.isfinite(frames)) or frames.min() < 0:
            raise ValueError("frame intensities must be finite and non-negative")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "timestamps", ts)

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    def __len__(self) -> int:
        return len(self.frames)


def _crossings(l0, l1, ref, c, t0, dt, sign):
    """Threshold crossings of one polarity for a batch of pixels.

    Returns (pixel index, timestamps, count per pixel).
    """
    if sign > 0:
        n = np.floor((l1 - ref) / c + _CROSSING_TOL)
    else:
        n = np.floor((ref - l1) / c + _CROSSING_TOL)
    n = np.maximum(n, 0).astype(np.int64)
    pix = np.flatnonzero(n)
    if len(pix) == 0:
        return pix, np.zeros(0, np.int64), n
    reps = n[pix]
    pix_rep = np.repeat(pix, reps)
    offsets = np.cumsum(reps) - reps
    k = np.arange(len(pix_rep)) - np.repeat(offsets, reps) + 1
    level = ref[pix_rep] + sign * k * c
    frac = (level - l0[pix_rep]) / (l1[pix_rep] - l0[pix_rep])
    frac = np.clip(frac, 0.0, 1.0)
    t = t0 + np.rint(frac * dt).astype(np.int64)
    return pix_rep, t, n


def generate_events(
    frames: FrameSequence, config: SimConfig = SimConfig(), seed: int = 0, duration: int | None = None
) -> EventStream:
    """Events for a frame sequence; ``duration`` defaults to the last frame time."""
    h, w = frames.height, frames.width
    cp, cn = config.contrast_threshold_pos, config.contrast_threshold_neg
    log_prev = np.log(frames.frames[0].ravel() + config.log_eps)
    ref = log_prev.copy()
    ts_all, pix_all, pol_all = [], [], []
    for i in range(1, len(frames)):
        log_cur = np.log(frames.frames[i].ravel() + config.log_eps)
        t0 = int(frames.timestamps[i - 1])
        dt = int(frames.timestamps[i] - t0)
        rising = log_cur > log_prev
        falling = log_cur < log_prev
        for sign, mask, c in ((1, rising, cp), (-1, falling, cn)):
            sub = np.flatnonzero(mask)
            if len(sub) == 0:
                continue
            pix, t, n = _crossings(log_prev[sub], log_cur[sub], ref[sub], c, t0, dt, sign)
            ref[sub] += sign * n * c
            if len(pix):
                ts_all.append(t)
                pix_all.append(sub[pix])
                pol_all.append(np.full(len(pix), 1 if sign > 0 else 0, np.uint8))
        log_prev = log_cur
    if duration is None:
        duration = int(frames.timestamps[-1])
    elif duration < frames.timestamps[-1]:
        raise ValueError("duration ends before the last frame")
    if ts_all:
        pix = np.concatenate(pix_all)
        stream = EventStream.from_arrays(
            w, h, duration, np.concatenate(ts_all), pix % w, pix // w, np.concatenate(pol_all)
        )
    else:
        stream = EventStream.empty(w, h, duration)
    if config.noise_rate > 0:
        stream = inject_noise(stream, config, seed)
    return stream


def inject_noise(stream: EventStream, config: SimConfig, seed: int) -> EventStream:
    """Add spatially and temporally uniform background events."""
    if config.noise_rate == 0:
        return stream
    rng = np.random.default_rng(seed)
    expected = config.noise_rate * stream.width * stream.height * stream.duration / 1e9
    n = int(rng.poisson(expected))
    noise = EventStream(
        stream.width, stream.height, stream.duration,
        rng.integers(0, max(stream.duration, 1), n),
        rng.integers(0, stream.width, n),
        rng.integers(0, stream.height, n),
        rng.integers(0, 2, n),
    )
    return EventStream.merge(stream, noise)


@dataclass(frozen=True)
class EventRate:
    total: float
    positive: float
    negative: float


def compute_event_rate(stream: EventStream) -> EventRate:
    """Events per second over the stream duration."""
    if stream.duration <= 0:
        raise ValueError("event rate undefined for a zero-duration stream")
    seconds = stream.duration / 1e9
    n_pos = int(np.count_nonzero(stream.p))
    return EventRate(len(stream) / seconds, n_pos / seconds, (len(stream) - n_pos) / seconds)

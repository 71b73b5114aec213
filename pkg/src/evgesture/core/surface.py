"""Polarity-separated exponentially decayed time surfaces.

A surface for a window ending at ``T_max`` stores, for every pixel and
polarity, ``exp(-decay * (T_max - T_i) / T_s)`` where ``T_i`` is the newest
event at that pixel with ``T_i <= T_max`` and ``T_max - T_i < T_s``; all other
pixels are zero. The positive plane occupies rows ``0..h-1`` and the negative
plane rows ``h..2h-1`` of a ``(2h, w)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .events import EventStream

MS = 1_000_000
_NEVER = -(1 << 62)  # sentinel timestamp for pixels without events


class EmptyWindowError(ValueError):
    pass


@dataclass(frozen=True)
class WindowConfig:
    window_ns: int = 240 * MS
    step_ns: int = 80 * MS
    decay: float = 5.0
    sequence_ns: int = 2000 * MS

    def __post_init__(self) -> None:
        if not 0 < self.step_ns <= self.window_ns <= self.sequence_ns:
            raise ValueError("require 0 < step <= window <= sequence length")
        if self.decay <= 0:
            raise ValueError("decay must be positive")

    @property
    def num_windows(self) -> int:
        return (self.sequence_ns - self.window_ns) // self.step_ns + 1


@dataclass(frozen=True, eq=False)
class TimeSurface:
    values: np.ndarray
    window_end: int
    window_index: int = 0

    @property
    def height(self) -> int:
        return self.values.shape[0] // 2

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def positive(self) -> np.ndarray:
        return self.values[: self.height]

    @property
    def negative(self) -> np.ndarray:
        return self.values[self.height:]

    def planes(self) -> np.ndarray:
        """View as a ``(2, h, w)`` channel stack."""
        return self.values.reshape(2, self.height, self.width)

    def save_npy(self, path) -> None:
        np.save(Path(path), self.values)


def slice_windows(duration: int, config: WindowConfig) -> list[tuple[int, int, int]]:
    """Full windows ``[k*step, k*step + T_s)`` that fit inside ``duration``."""
    if duration < config.window_ns:
        raise EmptyWindowError(
            f"stream of {duration} ns is shorter than one window ({config.window_ns} ns)"
        )
    count = (duration - config.window_ns) // config.step_ns + 1
    return [
        (k * config.step_ns, k * config.step_ns + config.window_ns, k)
        for k in range(count)
    ]


def _decay_values(last_t: np.ndarray, window_end: int, config: WindowConfig) -> np.ndarray:
    age = window_end - last_t
    live = (age >= 0) & (age < config.window_ns)
    out = np.zeros(last_t.shape, np.float64)
    out[live] = np.exp(-config.decay * age[live] / config.window_ns)
    return out


def build_time_surface(
    stream: EventStream, window_end: int, config: WindowConfig, window_index: int = 0
) -> TimeSurface:
    if window_end < config.window_ns:
        raise ValueError("window_end must be at least one window length")
    stream.check_sorted()
    h, w = stream.height, stream.width
    lo = np.searchsorted(stream.t, window_end - config.window_ns, side="right")
    hi = np.searchsorted(stream.t, window_end, side="right")
    # Flattened (polarity, row, col) index; plane 0 is positive polarity.
    plane = 1 - stream.p[lo:hi].astype(np.int64)
    flat = (plane * h + stream.y[lo:hi]) * w + stream.x[lo:hi]
    last = np.full(2 * h * w, _NEVER, np.int64)
    # Newest event per pixel is the maximum timestamp, independent of write order.
    np.maximum.at(last, flat, stream.t[lo:hi])
    values = _decay_values(last, window_end, config).reshape(2 * h, w)
    return TimeSurface(values, window_end, window_index)


def build_all_surfaces(stream: EventStream, config: WindowConfig) -> list[TimeSurface]:
    return [
        build_time_surface(stream, end, config, k)
        for _start, end, k in slice_windows(stream.duration, config)
    ]


@dataclass
class StreamingSurface:
    """Incremental builder: overwrite on event, expire stale pixels on read."""

    width: int
    height: int
    config: WindowConfig
    _last: np.ndarray = field(init=False, repr=False)
    _t_latest: int = field(init=False, default=-1)

    def __post_init__(self) -> None:
        self._last = np.full((2 * self.height, self.width), _NEVER, np.int64)

    def update(self, x: int, y: int, polarity: int, t: int) -> None:
        if t < self._t_latest:
            raise ValueError("events must arrive in timestamp order")
        self._t_latest = t
        row = y if polarity else y + self.height
        self._last[row, x] = t

    def update_stream(self, stream: EventStream, until: int | None = None) -> None:
        for ev in stream:
            if until is not None and ev.t > until:
                break
            self.update(ev.x, ev.y, ev.polarity, ev.t)

    def read(self, window_end: int, window_index: int = 0) -> TimeSurface:
        stale = window_end - self._last >= self.config.window_ns
        self._last[stale] = _NEVER
        values = _decay_values(self._last.ravel(), window_end, self.config)
        return TimeSurface(values.reshape(self._last.shape), window_end, window_index)


def stack_channels(surfaces: list[TimeSurface]) -> np.ndarray:
    """Stack the newest surface with its two predecessors into a ``(6h, w)`` input.

    ``surfaces`` is ordered newest first; missing predecessors (sequence
    start) are zero planes.
    """
    if not surfaces or len(surfaces) > 3:
        raise ValueError("expected one to three surfaces, newest first")
    shape = surfaces[0].values.shape
    for s in surfaces[1:]:
        if s.values.shape != shape:
            raise ValueError(f"surface shape {s.values.shape} does not match {shape}")
    for newer, older in zip(surfaces, surfaces[1:]):
        if older.window_index != newer.window_index - 1:
            raise ValueError("surfaces must be consecutive windows, newest first")
    planes = [s.values for s in surfaces]
    planes += [np.zeros(shape, planes[0].dtype)] * (3 - len(planes))
    return np.concatenate(planes, axis=0)


def stacked_history(surfaces: list[TimeSurface], k: int) -> np.ndarray:
    """``stack_channels`` for window ``k`` of an oldest-first surface list."""
    return stack_channels([surfaces[j] for j in range(k, max(k - 3, -1), -1)])

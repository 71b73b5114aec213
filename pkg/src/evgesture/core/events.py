"""Event records, sorted event streams and the EVT2 binary container.

An EVT2 file is a 16-byte little-endian header followed by packed 13-byte
records::

    header:  magic "EVT2" | version u8 | flags u8 | width u16 | height u16
             | duration_ns u48
    record:  t u64 (ns) | x u16 | y u16 | polarity u8
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

EVT2_MAGIC = b"EVT2"
EVT2_VERSION = 1
_HEADER = struct.Struct("<4sBBHH6s")
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])
assert _HEADER.size == 16 and RECORD_DTYPE.itemsize == 13


class SortednessError(ValueError):
    """Raised when an event stream is not ordered by timestamp."""


class EventFormatError(ValueError):
    pass


class Event(NamedTuple):
    x: int
    y: int
    polarity: int
    t: int


@dataclass(frozen=True, eq=False)
class EventStream:
    """Columnar, immutable event stream.

    ``t`` is int64 nanoseconds, ``x``/``y`` are pixel column/row and ``p`` is
    1 for an intensity increase and 0 for a decrease.
    """

    width: int
    height: int
    duration: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns must have equal length")
        if self.width <= 0 or self.height <= 0 or self.duration < 0:
            raise ValueError("invalid stream geometry")
        for name, dtype in (("t", np.int64), ("x", np.int32), ("y", np.int32), ("p", np.uint8)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def empty(cls, width: int, height: int, duration: int) -> "EventStream":
        z = np.zeros(0, np.int64)
        return cls(width, height, duration, z, z, z, z)

    @classmethod
    def from_events(cls, events, width: int, height: int, duration: int, sort: bool = True) -> "EventStream":
        events = list(events)
        if not events:
            return cls.empty(width, height, duration)
        x, y, p, t = (np.array(col) for col in zip(*events))
        stream = cls(width, height, duration, t, x, y, p)
        return stream.sorted() if sort else stream

    @classmethod
    def from_arrays(cls, width, height, duration, t, x, y, p, sort: bool = True) -> "EventStream":
        stream = cls(width, height, duration, t, x, y, p)
        return stream.sorted() if sort else stream

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> Event:
        return Event(int(self.x[i]), int(self.y[i]), int(self.p[i]), int(self.t[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            (self.width, self.height, self.duration) == (other.width, other.height, other.duration)
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp")
        )

    def sorted(self) -> "EventStream":
        """Return a copy ordered by (t, y, x, polarity)."""
        order = np.lexsort((self.p, self.x, self.y, self.t))
        return EventStream(
            self.width, self.height, self.duration,
            self.t[order], self.x[order], self.y[order], self.p[order],
        )

    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.t) >= 0))

    def check_sorted(self) -> None:
        if not self.is_sorted():
            bad = int(np.argmax(np.diff(self.t) < 0))
            raise SortednessError(
                f"timestamps decrease at index {bad + 1}: {self.t[bad]} -> {self.t[bad + 1]}"
            )

    def validate(self) -> None:
        self.check_sorted()
        if len(self):
            if self.x.min() < 0 or self.x.max() >= self.width:
                raise ValueError("x coordinate out of sensor bounds")
            if self.y.min() < 0 or self.y.max() >= self.height:
                raise ValueError("y coordinate out of sensor bounds")
            if self.t.min() < 0 or self.t.max() > self.duration:
                raise ValueError("timestamp outside stream duration")
            if self.p.max() > 1:
                raise ValueError("polarity must be 0 or 1")

    def between(self, t_start: int, t_end: int) -> "EventStream":
        """Events with ``t_start <= t < t_end`` (stream must be sorted)."""
        lo, hi = np.searchsorted(self.t, [t_start, t_end], side="left")
        return EventStream(
            self.width, self.height, self.duration,
            self.t[lo:hi], self.x[lo:hi], self.y[lo:hi], self.p[lo:hi],
        )

    @staticmethod
    def merge(*streams: "EventStream") -> "EventStream":
        first = streams[0]
        return EventStream.from_arrays(
            first.width, first.height, max(s.duration for s in streams),
            np.concatenate([s.t for s in streams]),
            np.concatenate([s.x for s in streams]),
            np.concatenate([s.y for s in streams]),
            np.concatenate([s.p for s in streams]),
        )

    # -- serialization -------------------------------------------------
    def to_bytes(self) -> bytes:
        if self.duration >= 1 << 48:
            raise EventFormatError("duration does not fit in 48 bits")
        header = _HEADER.pack(
            EVT2_MAGIC, EVT2_VERSION, 0, self.width, self.height,
            int(self.duration).to_bytes(6, "little"),
        )
        rec = np.empty(len(self), RECORD_DTYPE)
        rec["t"], rec["x"], rec["y"], rec["p"] = self.t, self.x, self.y, self.p
        return header + rec.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EventStream":
        if len(data) < _HEADER.size:
            raise EventFormatError("truncated EVT2 header")
        magic, version, _flags, width, height, dur = _HEADER.unpack_from(data)
        if magic != EVT2_MAGIC:
            raise EventFormatError(f"bad magic {magic!r}")
        if version != EVT2_VERSION:
            raise EventFormatError(f"unsupported EVT2 version {version}")
        body = memoryview(data)[_HEADER.size:]
        if len(body) % RECORD_DTYPE.itemsize:
            raise EventFormatError("trailing bytes after last record")
        rec = np.frombuffer(body, RECORD_DTYPE)
        return cls(
            width, height, int.from_bytes(dur, "little"),
            rec["t"].astype(np.int64), rec["x"], rec["y"], rec["p"],
        )

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "EventStream":
        return cls.from_bytes(Path(path).read_bytes())

from __future__ import annotations

from enum import IntEnum


class GestureClass(IntEnum):
    UNKNOWN = 1
    UNTRACKED = 2
    PINCH = 3
    DOUBLE_PINCH = 4
    PINCH_RETURN = 5
    SWIPE_LEFT = 6
    SWIPE_LEFT_RETURN = 7
    SWIPE_RIGHT = 8
    SWIPE_RIGHT_RETURN = 9
    REST = 10

    @property
    def index(self) -> int:
        """Zero-based position, used for logits and confusion matrices."""
        return int(self) - 1

    @classmethod
    def from_index(cls, i: int) -> "GestureClass":
        return cls(int(i) + 1)

    @classmethod
    def parse(cls, value) -> "GestureClass":
        if isinstance(value, GestureClass):
            return value
        if isinstance(value, str):
            key = value.strip().upper().replace(" ", "_").replace("-", "_")
            return cls[key]
        return cls(int(value))


NUM_CLASSES = len(GestureClass)

# Classes that may be reported as a detected microgesture at inference time.
EMITTING_CLASSES = frozenset(
    {
        GestureClass.PINCH,
        GestureClass.DOUBLE_PINCH,
        GestureClass.SWIPE_LEFT,
        GestureClass.SWIPE_RIGHT,
    }
)

RETURN_OF = {
    GestureClass.PINCH: GestureClass.PINCH_RETURN,
    GestureClass.DOUBLE_PINCH: GestureClass.PINCH_RETURN,
    GestureClass.SWIPE_LEFT: GestureClass.SWIPE_LEFT_RETURN,
    GestureClass.SWIPE_RIGHT: GestureClass.SWIPE_RIGHT_RETURN,
}

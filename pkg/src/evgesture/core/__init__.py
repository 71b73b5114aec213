from .events import Event, EventFormatError, EventStream, SortednessError
from .gestures import EMITTING_CLASSES, NUM_CLASSES, RETURN_OF, GestureClass
from .labels import GESTURE_THRESHOLD, aggregate_window_label, count_transitions, window_labels
from .surface import (
    MS,
    EmptyWindowError,
    StreamingSurface,
    TimeSurface,
    WindowConfig,
    build_all_surfaces,
    build_time_surface,
    slice_windows,
    stack_channels,
    stacked_history,
)

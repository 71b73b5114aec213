import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evgesture.core.events import EVT2_MAGIC, EventFormatError, EventStream, SortednessError
from evgesture.core.gestures import NUM_CLASSES, GestureClass

from helpers import random_stream


def test_gesture_encoding_is_stable():
    names = [
        "UNKNOWN", "UNTRACKED", "PINCH", "DOUBLE_PINCH", "PINCH_RETURN",
        "SWIPE_LEFT", "SWIPE_LEFT_RETURN", "SWIPE_RIGHT", "SWIPE_RIGHT_RETURN", "REST",
    ]
    assert NUM_CLASSES == 10
    assert [g.name for g in GestureClass] == names
    assert [int(g) for g in GestureClass] == list(range(1, 11))


def test_sort_breaks_ties_by_row_column_polarity():
    s = EventStream.from_events([(3, 1, 1, 5), (2, 1, 0, 5), (0, 0, 1, 5), (9, 9, 0, 1)], 10, 10, 10)
    assert [(e.t, e.y, e.x, e.polarity) for e in s] == [(1, 9, 9, 0), (5, 0, 0, 1), (5, 1, 2, 0), (5, 1, 3, 1)]


def test_unsorted_stream_is_rejected():
    s = EventStream.from_arrays(4, 4, 10, [5, 1], [0, 0], [0, 0], [1, 1], sort=False)
    with pytest.raises(SortednessError):
        s.check_sorted()


def test_evt2_layout(tmp_path):
    s = EventStream.from_events([(1, 2, 1, 7)], 64, 48, 2_000_000_000)
    data = s.to_bytes()
    assert len(data) == 16 + 13
    assert data[:4] == EVT2_MAGIC
    assert int.from_bytes(data[6:8], "little") == 64
    assert int.from_bytes(data[8:10], "little") == 48
    assert int.from_bytes(data[10:16], "little") == 2_000_000_000
    assert int.from_bytes(data[16:24], "little") == 7
    path = tmp_path / "s.evt2"
    s.save(path)
    assert EventStream.load(path) == s


def test_evt2_rejects_bad_input():
    with pytest.raises(EventFormatError):
        EventStream.from_bytes(b"EVT")
    with pytest.raises(EventFormatError):
        EventStream.from_bytes(b"XXXX" + bytes(12))
    good = EventStream.from_events([(1, 2, 1, 7)], 4, 4, 10).to_bytes()
    with pytest.raises(EventFormatError):
        EventStream.from_bytes(good + b"\0")


@given(st.integers(0, 300), st.integers(0, 2**32))
def test_evt2_round_trip(n, seed):
    s = random_stream(np.random.default_rng(seed), n)
    assert EventStream.from_bytes(s.to_bytes()) == s


def test_between_and_merge(rng):
    a, b = random_stream(rng, 200), random_stream(rng, 100)
    m = EventStream.merge(a, b)
    assert len(m) == 300 and m.is_sorted()
    part = m.between(500_000_000, 1_000_000_000)
    assert np.all((part.t >= 500_000_000) & (part.t < 1_000_000_000))
    assert len(part) == np.count_nonzero((m.t >= 500_000_000) & (m.t < 1_000_000_000))


def test_validate_bounds():
    with pytest.raises(ValueError):
        EventStream.from_arrays(4, 4, 10, [1], [4], [0], [1]).validate()
    with pytest.raises(ValueError):
        EventStream.from_arrays(4, 4, 10, [11], [0], [0], [1]).validate()

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evgesture.core.gestures import GestureClass as G
from evgesture.core.labels import GESTURE_THRESHOLD, aggregate_window_label, count_transitions, window_labels
from evgesture.core.surface import MS, WindowConfig

labels_st = st.lists(st.sampled_from(list(G)), min_size=1, max_size=30)


def test_default_threshold():
    assert GESTURE_THRESHOLD == 0.6


def test_first_window_majority():
    assert aggregate_window_label([G.REST] * 6 + [G.SWIPE_RIGHT] * 4) == G.REST


def test_switch_at_threshold():
    frames = [G.SWIPE_RIGHT] * 6 + [G.REST] * 4
    assert aggregate_window_label(frames, 0.6, G.REST) == G.SWIPE_RIGHT


def test_below_threshold_keeps_previous():
    frames = [G.SWIPE_RIGHT] * 59 + [G.REST] * 41
    assert aggregate_window_label(frames, 0.6, G.REST) == G.REST


def test_first_window_tie_goes_to_lowest_encoding():
    assert aggregate_window_label([G.REST, G.PINCH]) == G.PINCH


def test_errors():
    with pytest.raises(ValueError):
        aggregate_window_label([])
    with pytest.raises(ValueError):
        aggregate_window_label([G.REST], 0.0)
    with pytest.raises(ValueError):
        aggregate_window_label([G.REST], 1.5)


@given(st.sampled_from(list(G)), st.integers(1, 40), st.floats(0.01, 1.0))
def test_idempotent_on_uniform_previous(prev, n, thr):
    assert aggregate_window_label([prev] * n, thr, prev) == prev


def chained(windows, thr):
    out, prev = [], None
    for w in windows:
        prev = aggregate_window_label(w, thr, prev)
        out.append(prev)
    return out


@given(st.lists(labels_st, min_size=1, max_size=25), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_raising_threshold_never_adds_transitions(windows, a, b):
    lo, hi = min(a, b), max(a, b)
    assert count_transitions(chained(windows, hi)) <= count_transitions(chained(windows, lo))


@given(st.lists(labels_st, min_size=1, max_size=25), st.floats(0.5, 1.0))
def test_chain_result_is_a_frame_label_or_previous(windows, thr):
    out = chained(windows, thr)
    for k, (w, g) in enumerate(zip(windows, out)):
        assert g in w or (k > 0 and g == out[k - 1])


def test_window_labels_over_a_sequence():
    cfg = WindowConfig()
    times = np.arange(180) * (2000 * MS) // 180
    frames = [G.REST] * 180
    for i in range(60, 90):
        frames[i] = G.SWIPE_RIGHT
    out = window_labels(times, frames, cfg, 2000 * MS)
    assert len(out) == 23
    assert out[0] == G.REST
    assert G.SWIPE_RIGHT in out
    # Windows covering mostly the gesture switch, later windows go back to Rest.
    assert out[-1] == G.REST

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.events import EventStream
from ..core.gestures import EMITTING_CLASSES, GestureClass
from ..core.surface import MS, WindowConfig, build_all_surfaces, stacked_history
from ..model.config import ModelConfig
from ..model.network import Parameters, forward, to_model_input

SOFTMAX_THRESHOLD = 0.65
DEBOUNCE_NS = 240 * MS


@dataclass(frozen=True)
class PredictionEvent:
    gesture: GestureClass
    time: int  # ns, end of the first window of the run
    confidence: float


class FloatModel:
    """Float (optionally fake-quantised) model exposing ``predict_proba``."""

    def __init__(self, params: Parameters, config: ModelConfig, quantizer=None):
        self.params, self.config, self.quantizer = params, config, quantizer
        self._dtype = next(iter(params.values())).dtype

    @property
    def channels(self) -> int:
        return self.config.in_channels

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return forward(np.asarray(x, dtype=self._dtype), self.params, self.config, quantizer=self.quantizer).probabilities


class IntegerModel:
    def __init__(self, qmodel):
        self.qmodel = qmodel

    @property
    def channels(self) -> int:
        return self.qmodel.config.in_channels

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        from ..quant.integer import integer_forward

        return integer_forward(np.asarray(x), self.qmodel).probabilities


def window_inputs(stream: EventStream, window: WindowConfig, channels: int) -> tuple[np.ndarray, np.ndarray]:
    """NHWC inputs for every window of ``stream`` plus the window end times."""
    surfaces = build_all_surfaces(stream, window)
    if not surfaces:
        return np.zeros((0, stream.height, stream.width, channels), np.float32), np.zeros(0, np.int64)
    if channels == 2:
        planes = np.stack([s.values for s in surfaces])
    else:
        planes = np.stack([stacked_history(surfaces, k) for k in range(len(surfaces))])
    ends = np.array([s.window_end for s in surfaces], np.int64)
    return to_model_input(planes, channels).astype(np.float32), ends


def candidates_from_probs(
    probs: np.ndarray, window_ends: np.ndarray, threshold: float = SOFTMAX_THRESHOLD
) -> list[PredictionEvent]:
    """Windows whose top class is an emitting gesture with probability strictly above ``threshold``."""
    out = []
    for p, t in zip(probs, window_ends):
        k = int(np.argmax(p))
        g = GestureClass.from_index(k)
        if g in EMITTING_CLASSES and p[k] > threshold:
            out.append(PredictionEvent(g, int(t), float(p[k])))
    return out


def debounce(candidates: list[PredictionEvent], horizon_ns: int = DEBOUNCE_NS) -> list[PredictionEvent]:
    """Merge runs of same-class candidates spaced at most ``horizon_ns`` apart."""
    out: list[PredictionEvent] = []
    last_t = None
    for c in candidates:
        if out and out[-1].gesture == c.gesture and c.time - last_t <= horizon_ns:
            last_t = c.time
            continue
        out.append(c)
        last_t = c.time
    return out


def sliding_inference(
    stream: EventStream,
    model,
    window: WindowConfig = WindowConfig(),
    threshold: float = SOFTMAX_THRESHOLD,
    debounce_ns: int | None = None,
) -> list[PredictionEvent]:
    """Surface every ``window.step_ns``, classify, threshold and debounce."""
    x, ends = window_inputs(stream, window, model.channels)
    if len(x) == 0 or len(stream) == 0:
        return []
    probs = model.predict_proba(x)
    horizon = window.window_ns if debounce_ns is None else debounce_ns
    return debounce(candidates_from_probs(probs, ends, threshold), horizon)

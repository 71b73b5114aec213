"""8-bit quantisation primitives, range observers and simulated quantisation.

Weights: signed, symmetric, one scale per output channel, codes in [-127, 127].
Activations: unsigned, one (scale, zero_point) per tensor, codes in [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..model.config import ModelConfig
from ..model.network import Parameters, activation_points, forward, input_point

WEIGHT_QMAX = 127
ACT_QMAX = 255


def round_half_away(x):
    x = np.asarray(x)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize_weights(w: np.ndarray, axis: int = -1) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-channel symmetric int8 codes and scales (``axis`` = channel axis)."""
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    moved = np.moveaxis(w, axis, -1)
    absmax = np.abs(moved.reshape(-1, moved.shape[-1])).max(axis=0)
    scales = absmax / WEIGHT_QMAX
    scales = np.where(scales > 0, scales, 1.0)  # all-zero (or underflowing) channel
    q = np.clip(round_half_away(moved / scales), -WEIGHT_QMAX, WEIGHT_QMAX).astype(np.int8)
    return np.moveaxis(q, -1, axis), scales


def dequantize_weights(q: np.ndarray, scales: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.moveaxis(np.moveaxis(q.astype(np.float64), axis, -1) * scales, -1, axis)


def fake_quant_weights(w: np.ndarray) -> np.ndarray:
    q, s = quantize_weights(w)
    return dequantize_weights(q, s).astype(w.dtype)


def quantize_activation(a, scale: float, zero_point: int) -> np.ndarray:
    if scale <= 0:
        raise ValueError("scale must be positive")
    with np.errstate(over="ignore"):  # far out-of-range values saturate below
        q = round_half_away(np.asarray(a, dtype=np.float64) / scale) + zero_point
    return np.clip(q, 0, ACT_QMAX).astype(np.uint8)


def dequantize_activation(q, scale: float, zero_point: int) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - zero_point) * scale


def fake_quant_activation(a: np.ndarray, scale: float, zero_point: int) -> tuple[np.ndarray, np.ndarray]:
    """Quantise-dequantise plus the straight-through mask (1 inside the clamp range)."""
    lo = (0 - zero_point) * scale
    hi = (ACT_QMAX - zero_point) * scale
    out = dequantize_activation(quantize_activation(a, scale, zero_point), scale, zero_point).astype(a.dtype)
    mask = ((a >= lo) & (a <= hi)).astype(a.dtype)
    return out, mask


def qparams_from_range(lo: float, hi: float) -> tuple[float, int]:
    """Scale and zero-point for a range that is widened to include 0."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    scale = (hi - lo) / ACT_QMAX
    if scale <= 0:
        return 1.0, 0
    zp = int(np.clip(round_half_away(-lo / scale), 0, ACT_QMAX))
    return float(scale), zp


@dataclass
class RangeObserver:
    """EMA of per-batch min/max; the first batch initialises the range."""

    momentum: float = 0.99
    lo: float = 0.0
    hi: float = 0.0
    count: int = 0

    def update(self, a: np.ndarray) -> None:
        lo, hi = float(np.min(a)), float(np.max(a))
        if self.count == 0:
            self.lo, self.hi = lo, hi
        else:
            m = self.momentum
            self.lo = m * self.lo + (1 - m) * lo
            self.hi = m * self.hi + (1 - m) * hi
        self.count += 1

    @property
    def calibrated(self) -> bool:
        return self.count > 0

    def qparams(self) -> tuple[float, int]:
        return qparams_from_range(self.lo, self.hi)


def calibrate(stream, observer: RangeObserver | None = None) -> RangeObserver:
    """Feed an iterable of activation arrays through a range observer."""
    observer = observer or RangeObserver()
    n = 0
    for a in stream:
        observer.update(a)
        n += 1
    if n == 0 and not observer.calibrated:
        raise ValueError("empty activation stream")
    return observer


class UncalibratedError(RuntimeError):
    pass


@dataclass
class FakeQuantState:
    """Simulated-quantisation hooks for ``model.network.forward``.

    ``observe`` updates the range observers on every training-mode pass;
    ``enabled=False`` turns every hook into an exact passthrough.
    """

    config: ModelConfig
    momentum: float = 0.99
    enabled: bool = True
    quantize: bool = True
    observe: bool = True
    observers: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._weight_scales: dict[str, np.ndarray] = {}
        if not self.observers:
            self.observers = {p: RangeObserver(self.momentum) for p in activation_points(self.config)}

    @property
    def calibrated(self) -> bool:
        return all(o.calibrated for o in self.observers.values())

    def weight(self, name: str, w: np.ndarray) -> np.ndarray:
        if not (self.enabled and self.quantize):
            return w
        q, s = quantize_weights(w)
        self._weight_scales[name] = s
        return dequantize_weights(q, s).astype(w.dtype)

    def bias(self, name: str, b: np.ndarray) -> np.ndarray:
        """Snap the bias to the int32 grid ``weight_scale * input_scale``."""
        if not (self.enabled and self.quantize):
            return b
        obs = self.observers[input_point(name, self.config)]
        if not obs.calibrated:
            return b
        step = self._weight_scales[name] * obs.qparams()[0]
        return (round_half_away(b / step) * step).astype(b.dtype)

    def act(self, name: str, a: np.ndarray, training: bool):
        if not self.enabled:
            return a, None
        obs = self.observers[name]
        if training and self.observe:
            obs.update(a)
        if not self.quantize:
            return a, None
        if not obs.calibrated:
            raise UncalibratedError(f"activation point {name} has no observed range")
        scale, zp = obs.qparams()
        return fake_quant_activation(a, scale, zp)

    def act_qparams(self) -> dict[str, tuple[float, int]]:
        if not self.calibrated:
            missing = [k for k, o in self.observers.items() if not o.calibrated]
            raise UncalibratedError(f"uncalibrated activation points: {missing}")
        return {k: o.qparams() for k, o in self.observers.items()}

    def to_dict(self) -> dict:
        return {k: {"lo": o.lo, "hi": o.hi, "count": o.count} for k, o in self.observers.items()}

    @classmethod
    def from_dict(cls, config: ModelConfig, d: dict, momentum: float = 0.99) -> "FakeQuantState":
        obs = {k: RangeObserver(momentum, v["lo"], v["hi"], v["count"]) for k, v in d.items()}
        return cls(config, momentum, observers=obs)


def calibrate_model(
    params: Parameters, config: ModelConfig, x: np.ndarray, batch_size: int = 64, state: FakeQuantState | None = None
) -> FakeQuantState:
    """Observe every activation point over ``x`` using the float model."""
    state = state or FakeQuantState(config)
    if len(x) == 0:
        raise ValueError("empty calibration set")
    observing = FakeQuantState(config, state.momentum, quantize=False, observers=state.observers)
    dtype = next(iter(params.values())).dtype
    no_drop = replace(config, dropout=0.0)
    for s in range(0, len(x), batch_size):
        # Training mode so the observers update; a zero dropout rate keeps it eval-like.
        xb = np.asarray(x[s : s + batch_size], dtype=dtype)
        forward(xb, params, no_drop, training=True, rng=np.random.default_rng(0), quantizer=observing)
    return state

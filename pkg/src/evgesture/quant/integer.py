"""Integer inference for the quantised stages.

Stage-2 and stage-4 convolutions and dense layers run on uint8 activations and
int8 weights with integer accumulation, then requantise with a per-channel
fixed-point multiplier ``m0 * 2**-shift``. Stages 1, 3 and 5 stay in float.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..model import layers as L
from ..model.config import ModelConfig
from ..model.crop import crop_resize
from ..model.network import ForwardOutput, Parameters, input_point
from .fake import FakeQuantState, quantize_activation, quantize_weights, round_half_away

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1
FLOAT_LAYERS = ("s2.presence", "s3.bbox", "s5.fc")


class AccumulatorOverflowError(OverflowError):
    def __init__(self, layer: str):
        super().__init__(f"int32 accumulator overflow in layer {layer}")
        self.layer = layer


def quantize_multiplier(m: float) -> tuple[int, int]:
    """Fixed-point ``(m0, shift)`` with ``m ~= m0 * 2**-shift`` and m0 in [2**30, 2**31)."""
    if m <= 0:
        return 0, 0
    mant, exp = np.frexp(m)
    m0 = int(np.rint(mant * 2**31))  # half to even
    if m0 == 2**31:
        m0 //= 2
        exp += 1
    return m0, 31 - int(exp)


def requantize(acc, m0, shift) -> np.ndarray:
    """Vectorised reference: round(acc * m0 / 2**shift), ties away from zero."""
    acc = np.asarray(acc, dtype=np.int64)
    m0 = np.asarray(m0, dtype=np.int64)
    shift = np.asarray(shift, dtype=np.int64)
    prod = acc * m0
    s = np.clip(shift, 1, 62)
    half = np.left_shift(np.int64(1), s - 1)
    mag = np.right_shift(np.abs(prod) + half, s)
    out = np.where(prod >= 0, mag, -mag)
    out = np.where(shift > 62, 0, out)
    return np.where(shift <= 0, np.left_shift(prod, np.clip(-shift, 0, 62)), out)


@numba.njit(cache=True, inline="always")
def _requant(prod, shift):
    if shift <= 0:
        return prod << (-shift)
    if shift > 62:
        return 0
    half = np.int64(1) << (shift - 1)
    if prod >= 0:
        return (prod + half) >> shift
    return -((-prod + half) >> shift)


@numba.njit(cache=True)
def conv_int(x, zx, w, bias, stride, pad, m0, shift, zy, floor, acc):
    """x: (n, h, w, cin) uint8; w: (k, k, cin, cout) int8; acc: scratch (cout,) int32/int64.

    Returns (uint8 output, overflow flag). Padding behaves as the input
    zero-point, i.e. contributes nothing.
    """
    n, h, wd, cin = x.shape
    k = w.shape[0]
    cout = w.shape[3]
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.empty((n, ho, wo, cout), np.uint8)
    overflow = False
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                for co in range(cout):
                    acc[co] = bias[co]
                for ky in range(k):
                    iy = oy * stride - pad + ky
                    if iy < 0 or iy >= h:
                        continue
                    for kx in range(k):
                        ix = ox * stride - pad + kx
                        if ix < 0 or ix >= wd:
                            continue
                        for ci in range(cin):
                            v = np.int32(x[b, iy, ix, ci]) - zx
                            for co in range(cout):
                                acc[co] += v * np.int32(w[ky, kx, ci, co])
                for co in range(cout):
                    a = np.int64(acc[co])
                    if a > 2147483647 or a < -2147483648:
                        overflow = True
                    y = zy + _requant(a * m0[co], shift[co])
                    if y < floor:
                        y = floor
                    elif y > 255:
                        y = 255
                    out[b, oy, ox, co] = y
    return out, overflow


@numba.njit(cache=True)
def dense_int(x, zx, w, bias, m0, shift, zy, floor, acc):
    """x: (n, nin) uint8; w: (nin, nout) int8."""
    n, nin = x.shape
    nout = w.shape[1]
    out = np.empty((n, nout), np.uint8)
    overflow = False
    for b in range(n):
        for co in range(nout):
            acc[co] = bias[co]
        for i in range(nin):
            v = np.int32(x[b, i]) - zx
            if v == 0:
                continue
            for co in range(nout):
                acc[co] += v * np.int32(w[i, co])
        for co in range(nout):
            a = np.int64(acc[co])
            if a > 2147483647 or a < -2147483648:
                overflow = True
            y = zy + _requant(a * m0[co], shift[co])
            if y < floor:
                y = floor
            elif y > 255:
                y = 255
            out[b, co] = y
    return out, overflow


@dataclass
class QuantizedLayer:
    name: str
    kind: str  # "conv" or "dense"
    weight: np.ndarray  # int8
    weight_scales: np.ndarray  # per output channel
    bias: np.ndarray  # int32 at scale weight_scale * in_scale
    in_scale: float
    in_zero_point: int
    out_scale: float
    out_zero_point: int
    m0: np.ndarray  # int64 per channel
    shift: np.ndarray  # int64 per channel
    stride: int = 1
    pad: int = 0

    @property
    def weight_zero_points(self) -> np.ndarray:
        return np.zeros(len(self.weight_scales), np.int64)

    def run(self, xq: np.ndarray, checked: bool = False) -> np.ndarray:
        # int64 scratch keeps the true sum so overflow is observable; int32 is
        # the production accumulator.
        acc = np.zeros(self.weight.shape[-1], np.int64 if checked else np.int32)
        floor = self.out_zero_point  # fused ReLU: real 0 maps to the zero-point
        if self.kind == "conv":
            y, ovf = conv_int(
                xq, self.in_zero_point, self.weight, self.bias, self.stride, self.pad,
                self.m0, self.shift, self.out_zero_point, floor, acc,
            )
        else:
            y, ovf = dense_int(xq, self.in_zero_point, self.weight, self.bias, self.m0, self.shift, self.out_zero_point, floor, acc)
        if checked and ovf:
            raise AccumulatorOverflowError(self.name)
        return y


@dataclass
class QuantizedModel:
    config: ModelConfig
    layers: dict[str, QuantizedLayer]
    float_params: Parameters
    act_qparams: dict[str, tuple[float, int]]
    meta: dict = field(default_factory=dict)


def _layer_specs(config: ModelConfig):
    out = {}
    for i, s in enumerate(config.stage2):
        out[f"s2.conv{i}"] = ("conv", s.stride, s.pad)
    out["s2.fc"] = ("dense", 1, 0)
    for i, s in enumerate(config.stage4):
        out[f"s4.conv{i}"] = ("conv", s.stride, s.pad)
    out["s4.fc"] = ("dense", 1, 0)
    return out


def quantize_model(params: Parameters, config: ModelConfig, state: FakeQuantState) -> QuantizedModel:
    """Integer parameters from float weights and calibrated activation ranges."""
    act = state.act_qparams()
    layers = {}
    for name, (kind, stride, pad) in _layer_specs(config).items():
        wq, ws = quantize_weights(params[name + ".w"])
        s_in, z_in = act[input_point(name, config)]
        s_out, z_out = act[name + ".out"]
        bias_scale = ws * s_in
        bq = round_half_away(params[name + ".b"].astype(np.float64) / bias_scale)
        if np.any(bq > INT32_MAX) or np.any(bq < INT32_MIN):
            raise AccumulatorOverflowError(name)
        mult = [quantize_multiplier(s_in * s / s_out) for s in ws]
        layers[name] = QuantizedLayer(
            name, kind, wq, ws, bq.astype(np.int32), s_in, z_in, s_out, z_out,
            np.array([m for m, _ in mult], np.int64), np.array([s for _, s in mult], np.int64), stride, pad,
        )
    floats = Parameters({k: v.copy() for k, v in params.items() if k.rsplit(".", 1)[0] in FLOAT_LAYERS})
    return QuantizedModel(config, layers, floats, act)


def _dequant(q, scale, zp, dtype):
    return ((q.astype(np.int32) - zp) * scale).astype(dtype)


def integer_forward(x: np.ndarray, qm: QuantizedModel, checked: bool = False) -> ForwardOutput:
    cfg = qm.config
    if x.ndim != 4 or x.shape[1:] != (cfg.height, cfg.width, cfg.in_channels):
        raise ValueError(f"input shape {x.shape[1:]} does not match model config")
    fp = qm.float_params
    dtype = fp["s5.fc.w"].dtype
    x = x.astype(dtype, copy=False)
    n = len(x)
    a, _ = L.avgpool_forward(x, cfg.pool)
    q = quantize_activation(a, *qm.act_qparams["s2.in"])
    for i in range(len(cfg.stage2)):
        q = qm.layers[f"s2.conv{i}"].run(q, checked)
    fc = qm.layers["s2.fc"]
    q = fc.run(q.reshape(n, -1), checked)
    f = _dequant(q, fc.out_scale, fc.out_zero_point, dtype)
    z = f @ fp["s2.presence.w"] + fp["s2.presence.b"]
    presence = L.sigmoid(z[:, 0])
    bbox = L.sigmoid(f @ fp["s3.bbox.w"] + fp["s3.bbox.b"])
    crop = crop_resize(x, bbox * np.array([1.0, 1.0, cfg.crop_margin], dtype=dtype), cfg.crop_res)
    q = quantize_activation(crop, *qm.act_qparams["s4.in"])
    for i in range(len(cfg.stage4)):
        q = qm.layers[f"s4.conv{i}"].run(q, checked)
    fc = qm.layers["s4.fc"]
    q = fc.run(q.reshape(n, -1), checked)
    h = _dequant(q, fc.out_scale, fc.out_zero_point, dtype)
    logits = h @ fp["s5.fc.w"] + fp["s5.fc.b"]
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    return ForwardOutput(bbox, presence, logits, z[:, 0])


def integer_predict(qm: QuantizedModel, x: np.ndarray, batch_size: int = 256) -> dict[str, np.ndarray]:
    parts = {"probs": [], "logits": [], "bbox": [], "presence": []}
    for s in range(0, len(x), batch_size):
        out = integer_forward(np.asarray(x[s : s + batch_size]), qm)
        parts["probs"].append(out.probabilities)
        parts["logits"].append(out.class_logits)
        parts["bbox"].append(out.bbox)
        parts["presence"].append(out.hand_presence)
    return {k: np.concatenate(v) for k, v in parts.items()}


# Container round trip --------------------------------------------------------

def to_container(qm: QuantizedModel) -> tuple[dict[str, np.ndarray], dict, dict]:
    tensors: dict[str, np.ndarray] = {}
    layer_meta = {}
    for name, ly in qm.layers.items():
        tensors[name + ".wq"] = ly.weight
        tensors[name + ".bq"] = ly.bias
        tensors[name + ".wscale"] = ly.weight_scales
        tensors[name + ".m0"] = ly.m0
        tensors[name + ".shift"] = ly.shift
        layer_meta[name] = dict(
            kind=ly.kind, stride=ly.stride, pad=ly.pad,
            in_scale=ly.in_scale, in_zero_point=ly.in_zero_point,
            out_scale=ly.out_scale, out_zero_point=ly.out_zero_point,
            weight_zero_point=0,
        )
    for k, v in qm.float_params.items():
        tensors[k] = v
    meta = dict(qm.meta, quant=dict(layers=layer_meta, activations={k: list(v) for k, v in qm.act_qparams.items()}, bits=8))
    return tensors, qm.config.to_dict(), meta


def from_container(tensors: dict, config: dict, meta: dict) -> QuantizedModel:
    cfg = ModelConfig.from_dict(config)
    qmeta = meta["quant"]
    layers = {}
    for name, m in qmeta["layers"].items():
        layers[name] = QuantizedLayer(
            name, m["kind"], tensors[name + ".wq"], tensors[name + ".wscale"], tensors[name + ".bq"],
            m["in_scale"], m["in_zero_point"], m["out_scale"], m["out_zero_point"],
            tensors[name + ".m0"], tensors[name + ".shift"], m["stride"], m["pad"],
        )
    floats = Parameters({k: v for k, v in tensors.items() if k.rsplit(".", 1)[0] in FLOAT_LAYERS})
    acts = {k: (float(v[0]), int(v[1])) for k, v in qmeta["activations"].items()}
    rest = {k: v for k, v in meta.items() if k != "quant"}
    return QuantizedModel(cfg, layers, floats, acts, rest)

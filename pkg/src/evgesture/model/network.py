"""Five-stage gesture network: pool, localise, crop, classify, combine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..core.gestures import GestureClass
from . import layers as L
from .config import ModelConfig
from .crop import crop_resize, crop_resize_backward

STAGES = (1, 2, 3, 4, 5)
UNTRACKED_INDEX = GestureClass.UNTRACKED.index


def layer_stage(name: str) -> int:
    return int(name[1])


class Parameters(dict):
    """Ordered name -> array mapping; names look like ``s2.conv0.w``."""

    def copy(self) -> "Parameters":
        return Parameters({k: v.copy() for k, v in self.items()})

    def astype(self, dtype) -> "Parameters":
        return Parameters({k: v.astype(dtype) for k, v in self.items()})

    def stage(self, s: int) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.items() if layer_stage(k) == s}

    def count(self, stages=STAGES) -> int:
        return sum(v.size for k, v in self.items() if layer_stage(k) in stages)

    def check_finite(self) -> None:
        for k, v in self.items():
            if not np.all(np.isfinite(v)):
                raise FloatingPointError(f"non-finite values in {k}")


def quantizable_layers(config: ModelConfig) -> list[str]:
    """Layers whose weights and outputs go through 8-bit quantisation."""
    names = [f"s2.conv{i}" for i in range(len(config.stage2))] + ["s2.fc"]
    names += [f"s4.conv{i}" for i in range(len(config.stage4))] + ["s4.fc"]
    return names


def activation_points(config: ModelConfig) -> list[str]:
    """Per-tensor activation quantisation points, in execution order."""
    layers = quantizable_layers(config)
    k = len(config.stage2) + 1
    return ["s2.in"] + [f"{n}.out" for n in layers[:k]] + ["s4.in"] + [f"{n}.out" for n in layers[k:]]


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Parameters:
    rng = np.random.default_rng(seed)
    p = Parameters()

    def conv(name, cin, spec):
        fan_in = spec.kernel * spec.kernel * cin
        p[name + ".w"] = rng.normal(0, np.sqrt(2.0 / fan_in), (spec.kernel, spec.kernel, cin, spec.channels))
        p[name + ".b"] = np.zeros(spec.channels)

    def dense(name, nin, nout, gain=2.0):
        p[name + ".w"] = rng.normal(0, np.sqrt(gain / nin), (nin, nout))
        p[name + ".b"] = np.zeros(nout)

    cin = config.in_channels
    for i, spec in enumerate(config.stage2):
        conv(f"s2.conv{i}", cin, spec)
        cin = spec.channels
    dense("s2.fc", int(np.prod(config.stage2_out_shape)), config.stage2_dense)
    dense("s2.presence", config.stage2_dense, 1, gain=1.0)
    dense("s3.bbox", config.stage2_dense, 3, gain=1.0)
    cin = config.in_channels
    for i, spec in enumerate(config.stage4):
        conv(f"s4.conv{i}", cin, spec)
        cin = spec.channels
    dense("s4.fc", int(np.prod(config.stage4_out_shape)), config.stage4_dense)
    dense("s5.fc", config.stage4_dense, config.num_classes, gain=1.0)
    return p.astype(dtype)


def input_point(name: str, config: ModelConfig) -> str:
    """Activation point feeding quantisable layer ``name``."""
    if name in ("s2.conv0", "s4.conv0"):
        return name[:2] + ".in"
    names = quantizable_layers(config)
    return names[names.index(name) - 1] + ".out"


class FakeQuantizer(Protocol):
    def weight(self, name: str, w: np.ndarray) -> np.ndarray: ...

    def bias(self, name: str, b: np.ndarray) -> np.ndarray: ...

    def act(self, name: str, a: np.ndarray, training: bool) -> tuple[np.ndarray, np.ndarray | None]: ...


@dataclass
class ForwardOutput:
    bbox: np.ndarray  # (n, 3) normalised (cx, cy, side)
    hand_presence: np.ndarray  # (n,)
    class_logits: np.ndarray  # (n, 10)
    presence_logit: np.ndarray  # (n,)
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def class_probs(self) -> np.ndarray:
        """Stage-4 softmax only."""
        return L.softmax(self.class_logits)

    @property
    def probabilities(self) -> np.ndarray:
        return combine_probabilities(self.class_logits, self.hand_presence)


def combine_probabilities(class_logits: np.ndarray, hand_presence: np.ndarray) -> np.ndarray:
    """Gate hand-requiring classes by presence; Untracked takes the remainder."""
    p = L.softmax(np.asarray(class_logits, dtype=np.float64))
    h = np.asarray(hand_presence, dtype=np.float64)[:, None]
    out = p * h
    out[:, UNTRACKED_INDEX] = 1.0 - h[:, 0]
    return out / out.sum(axis=1, keepdims=True)


def to_model_input(values: np.ndarray, channels: int) -> np.ndarray:
    """Stacked surface planes (..., channels*h, w) -> NHWC (..., h, w, channels)."""
    v = np.asarray(values)
    lead = v.shape[:-2]
    h = v.shape[-2] // channels
    v = v.reshape(*lead, channels, h, v.shape[-1])
    return np.moveaxis(v, -3, -1)


def _check(name: str, a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite activations after {name}")


def forward(
    x: np.ndarray,
    params: Parameters,
    config: ModelConfig,
    training: bool = False,
    rng: np.random.Generator | None = None,
    quantizer: FakeQuantizer | None = None,
    bbox_override: np.ndarray | None = None,
) -> ForwardOutput:
    """Run all stages on NHWC input ``x``.

    With ``training`` set, dropout uses ``rng`` (required). ``quantizer``
    inserts fake quantisation around stage-2 and stage-4 layers.
    ``bbox_override`` replaces the predicted crop box (stage-4 still sees a crop).
    """
    if x.ndim != 4 or x.shape[1:] != (config.height, config.width, config.in_channels):
        raise ValueError(f"input shape {x.shape[1:]} does not match model config")
    if training and rng is None:
        raise ValueError("training mode needs an rng for dropout")
    drop_rng = rng if training else None
    n = x.shape[0]
    c: dict = {"n": n}

    def wq(name):
        w = params[name + ".w"]
        return quantizer.weight(name, w) if quantizer is not None else w

    def bq(name):
        b = params[name + ".b"]
        return quantizer.bias(name, b) if quantizer is not None else b

    def aq(name, a):
        if quantizer is None:
            return a, None
        return quantizer.act(name, a, training)

    # Stage 1
    a, c["pool"] = L.avgpool_forward(x, config.pool)
    a, c["m.s2.in"] = aq("s2.in", a)
    # Stage 2
    for i, spec in enumerate(config.stage2):
        name = f"s2.conv{i}"
        a, c[name] = L.conv2d_forward(a, wq(name), bq(name), spec.stride, spec.pad)
        a, c[name + ".relu"] = L.relu_forward(a)
        a, c[f"m.{name}.out"] = aq(name + ".out", a)
    c["s2.flat"] = a.shape
    f, c["s2.fc"] = L.dense_forward(a.reshape(n, -1), wq("s2.fc"), bq("s2.fc"))
    f, c["s2.fc.relu"] = L.relu_forward(f)
    f, c["m.s2.fc.out"] = aq("s2.fc.out", f)
    f, c["s2.drop"] = L.dropout_forward(f, config.dropout, drop_rng)
    _check("stage 2", f)
    z, c["s2.presence"] = L.dense_forward(f, params["s2.presence.w"], params["s2.presence.b"])
    presence_logit = z[:, 0]
    presence = L.sigmoid(presence_logit)
    # Stage 3
    zb, c["s3.bbox"] = L.dense_forward(f, params["s3.bbox.w"], params["s3.bbox.b"])
    bbox = L.sigmoid(zb)
    c["s3.sig"] = bbox
    crop_box = bbox if bbox_override is None else np.asarray(bbox_override, dtype=x.dtype)
    c["bbox_override"] = bbox_override is not None
    scaled = crop_box * np.array([1.0, 1.0, config.crop_margin], dtype=x.dtype)
    g, c["crop"] = crop_resize(x, scaled, config.crop_res, with_cache=True)
    g, c["m.s4.in"] = aq("s4.in", g)
    # Stage 4
    for i, spec in enumerate(config.stage4):
        name = f"s4.conv{i}"
        g, c[name] = L.conv2d_forward(g, wq(name), bq(name), spec.stride, spec.pad)
        g, c[name + ".relu"] = L.relu_forward(g)
        g, c[f"m.{name}.out"] = aq(name + ".out", g)
    c["s4.flat"] = g.shape
    h, c["s4.fc"] = L.dense_forward(g.reshape(n, -1), wq("s4.fc"), bq("s4.fc"))
    h, c["s4.fc.relu"] = L.relu_forward(h)
    h, c["m.s4.fc.out"] = aq("s4.fc.out", h)
    h, c["s4.drop"] = L.dropout_forward(h, config.dropout, drop_rng)
    # Stage 5
    logits, c["s5.fc"] = L.dense_forward(h, params["s5.fc.w"], params["s5.fc.b"])
    _check("stage 5", logits)
    return ForwardOutput(bbox, presence, logits, presence_logit, c)


def _mask(d, m):
    return d if m is None else d * m


def backward(
    out: ForwardOutput,
    d_logits: np.ndarray,
    d_bbox: np.ndarray,
    d_presence_logit: np.ndarray,
    config: ModelConfig,
    frozen_stages: tuple[int, ...] = (),
) -> dict[str, np.ndarray]:
    """Parameter gradients given loss gradients w.r.t. the three heads.

    Stages listed in ``frozen_stages`` get no gradient entries and backward
    stops as soon as nothing upstream is trainable.
    """
    c = out.cache
    n = c["n"]
    grads: dict[str, np.ndarray] = {}

    def put(name, dw, db):
        if layer_stage(name) not in frozen_stages:
            grads[name + ".w"] = dw
            grads[name + ".b"] = db

    # Stage 5 / 4
    dh, dw, db = L.dense_backward(d_logits, c["s5.fc"])
    put("s5.fc", dw, db)
    dh = L.dropout_backward(dh, c["s4.drop"])
    dh = _mask(dh, c["m.s4.fc.out"])
    dh = L.relu_backward(dh, c["s4.fc.relu"])
    dg, dw, db = L.dense_backward(dh, c["s4.fc"])
    put("s4.fc", dw, db)
    dg = dg.reshape(c["s4.flat"])
    upstream_live = any(s not in frozen_stages for s in (2, 3)) and not c["bbox_override"] and config.crop_grad
    for i in reversed(range(len(config.stage4))):
        name = f"s4.conv{i}"
        dg = _mask(dg, c[f"m.{name}.out"])
        dg = L.relu_backward(dg, c[name + ".relu"])
        need = i > 0 or upstream_live
        dg, dw, db = L.conv2d_backward(dg, c[name], need_dx=need)
        put(name, dw, db)
    if not any(s not in frozen_stages for s in (2, 3)):
        return grads
    d_box = np.array(d_bbox, dtype=d_logits.dtype, copy=True)
    if upstream_live:
        dg = _mask(dg, c["m.s4.in"])
        d_crop_box, _ = crop_resize_backward(dg, c["crop"])
        d_crop_box[:, 2] *= config.crop_margin
        d_box += d_crop_box
    # Stage 3
    sig = c["s3.sig"]
    dzb = d_box * sig * (1 - sig)
    df, dw, db = L.dense_backward(dzb, c["s3.bbox"])
    put("s3.bbox", dw, db)
    # Presence head (stage 2)
    dfp, dw, db = L.dense_backward(d_presence_logit.reshape(n, 1).astype(d_logits.dtype), c["s2.presence"])
    put("s2.presence", dw, db)
    if 2 in frozen_stages:
        return grads
    df = df + dfp
    df = L.dropout_backward(df, c["s2.drop"])
    df = _mask(df, c["m.s2.fc.out"])
    df = L.relu_backward(df, c["s2.fc.relu"])
    da, dw, db = L.dense_backward(df, c["s2.fc"])
    put("s2.fc", dw, db)
    da = da.reshape(c["s2.flat"])
    for i in reversed(range(len(config.stage2))):
        name = f"s2.conv{i}"
        da = _mask(da, c[f"m.{name}.out"])
        da = L.relu_backward(da, c[name + ".relu"])
        da, dw, db = L.conv2d_backward(da, c[name], need_dx=i > 0)
        put(name, dw, db)
    return grads


def parameter_report(params: Parameters) -> dict:
    total = params.count()
    per_stage = {s: params.count((s,)) for s in STAGES}
    q = per_stage[2] + per_stage[4]
    return {"total": total, "per_stage": per_stage, "stages_2_4_fraction": q / total if total else 0.0}

"""Nested pipeline configuration loaded from YAML with full defaulting."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..core.surface import MS, WindowConfig
from ..model.config import ConvSpec, ModelConfig
from ..model.train import TrainConfig
from ..sim.esim import SimConfig
from ..synth.sequence import SynthConfig
from .dataset import DataConfig

OUTPUT_DIR_ENV = "EVGESTURE_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSection:
    window_ms: float = 240.0
    step_ms: float = 80.0
    decay: float = 5.0
    sequence_ms: float = 2000.0

    def build(self) -> WindowConfig:
        return WindowConfig(int(self.window_ms * MS), int(self.step_ms * MS), self.decay, int(self.sequence_ms * MS))


@dataclass(frozen=True)
class DataSection:
    multiplier: float = 0.05
    val_fraction: float = 0.2
    width: int = 64
    height: int = 64
    frame_rate: float = 90.0
    channels: int = 2
    gesture_threshold: float = 0.6
    texture_contrast: float = 0.07
    brightness: tuple[float, float] = (0.5, 4.0)
    contrast_threshold: float = 0.2
    noise_rate: float = 0.0
    jitter_deg: float = 1.0
    blend_ms: float = 50.0
    rotated_fraction: float = 0.5  # rotated fine-tuning set, relative to the training set


@dataclass(frozen=True)
class QatSection:
    epochs: int = 3
    lr_factor: float = 0.1
    calibration_samples: int = 2048
    momentum: float = 0.99


@dataclass(frozen=True)
class EvalSection:
    softmax_threshold: float = 0.65
    debounce_ms: float = 240.0
    match_window_ms: float = 2000.0
    units: int = 20
    trials_per_unit: int = 10
    model: str = "int8"  # float, finetuned, qat (fake-quant) or int8


@dataclass(frozen=True)
class BenchSection:
    iterations: int = 200
    rounds: int = 3


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    jobs: int = 1
    window: WindowSection = field(default_factory=WindowSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    qat: QatSection = field(default_factory=QatSection)
    eval: EvalSection = field(default_factory=EvalSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def data_config(self) -> DataConfig:
        d = self.data
        return DataConfig(
            width=d.width,
            height=d.height,
            frame_rate=d.frame_rate,
            multiplier=d.multiplier,
            val_fraction=d.val_fraction,
            brightness=tuple(d.brightness),
            texture_contrast=d.texture_contrast,
            synth=SynthConfig(frame_rate=d.frame_rate, jitter_deg=d.jitter_deg, blend_ns=int(d.blend_ms * MS)),
            sim=SimConfig(d.contrast_threshold, d.contrast_threshold, noise_rate=d.noise_rate),
            window=self.window.build(),
            gesture_threshold=d.gesture_threshold,
            channels=d.channels,
        )

    def model_config(self) -> ModelConfig:
        return dataclasses.replace(self.model, in_channels=self.data.channels, width=self.data.width, height=self.data.height)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed, gesture_threshold=self.data.gesture_threshold)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """Hash of everything except where outputs go and how many workers run."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _plain(o):
    if isinstance(o, dict):
        return {k: _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    return o


def _build(cls, values: dict, path: str):
    if not isinstance(values, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(values) - set(fields)
    if unknown:
        raise ConfigError(f"unknown key(s) in {path or '<root>'}: {sorted(unknown)}")
    kwargs = {}
    for name, v in values.items():
        f = fields[name]
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default) and not isinstance(default, type):
            if cls is PipelineConfig and name == "model":
                kwargs[name] = _model(v, f"{path}.{name}".strip("."))
            else:
                kwargs[name] = _build(type(default), v, f"{path}.{name}".strip("."))
        elif isinstance(default, tuple) and isinstance(v, list):
            kwargs[name] = tuple(v)
        else:
            kwargs[name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid values in {path or '<root>'}: {exc}") from exc


def _model(values: dict, path: str) -> ModelConfig:
    if not isinstance(values, dict):
        raise ConfigError(f"section {path} must be a mapping")
    v = dict(values)
    for key in ("stage2", "stage4"):
        if key in v:
            try:
                v[key] = tuple(ConvSpec(**s) for s in v[key])
            except TypeError as exc:
                raise ConfigError(f"bad conv spec in {path}.{key}: {exc}") from exc
    return _build(ModelConfig, v, path)


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> PipelineConfig:
    values: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            values = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    values = _merge(values, overrides or {})
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir and "output_dir" not in (overrides or {}):
        values["output_dir"] = env_dir
    return _build(PipelineConfig, values, "")


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..core.gestures import NUM_CLASSES
from .layers import conv_out_size


@dataclass(frozen=True)
class ConvSpec:
    channels: int
    kernel: int = 3
    stride: int = 1

    @property
    def pad(self) -> int:
        return self.kernel // 2


def _stage2_default():
    return (ConvSpec(8, 3, 2), ConvSpec(16, 3, 2), ConvSpec(32, 3, 1), ConvSpec(32, 3, 1))


def _stage4_default():
    return (ConvSpec(16, 3, 2), ConvSpec(32, 3, 2), ConvSpec(32, 3, 1))


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 2
    width: int = 64
    height: int = 64
    pool: int = 2
    stage2: tuple[ConvSpec, ...] = field(default_factory=_stage2_default)
    stage2_dense: int = 64
    stage4: tuple[ConvSpec, ...] = field(default_factory=_stage4_default)
    stage4_dense: int = 64
    crop_res: int = 32
    crop_margin: float = 1.25
    crop_grad: bool = True  # let the gesture loss move the predicted box
    num_classes: int = NUM_CLASSES
    dropout: float = 0.2

    def __post_init__(self) -> None:
        if self.in_channels not in (2, 6):
            raise ValueError("in_channels must be 2 or 6")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"class count must be {NUM_CLASSES}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.crop_margin <= 0:
            raise ValueError("crop_margin must be positive")
        stages = [tuple(ConvSpec(**s) if isinstance(s, dict) else s for s in st) for st in (self.stage2, self.stage4)]
        object.__setattr__(self, "stage2", stages[0])
        object.__setattr__(self, "stage4", stages[1])
        if self.width % self.pool or self.height % self.pool:
            raise ValueError("pool factor must divide the input size")
        self.stage2_out_shape  # raises if a stride collapses the map
        self.stage4_out_shape

    def _run(self, h: int, w: int, specs, cin: int) -> tuple[int, int, int]:
        c = cin
        for s in specs:
            h = conv_out_size(h, s.kernel, s.stride, s.pad)
            w = conv_out_size(w, s.kernel, s.stride, s.pad)
            if h < 1 or w < 1:
                raise ValueError("conv strides reduce the feature map below 1x1")
            c = s.channels
        return h, w, c

    @property
    def stage2_out_shape(self) -> tuple[int, int, int]:
        return self._run(self.height // self.pool, self.width // self.pool, self.stage2, self.in_channels)

    @property
    def stage4_out_shape(self) -> tuple[int, int, int]:
        return self._run(self.crop_res, self.crop_res, self.stage4, self.in_channels)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("stage2", "stage4"):
            if key in d:
                d[key] = tuple(ConvSpec(**s) if isinstance(s, dict) else ConvSpec(*s) for s in d[key])
        return cls(**d)

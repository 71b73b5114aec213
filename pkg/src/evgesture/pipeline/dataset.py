"""Simulate labelled event sequences and encode them into window samples."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..core.events import EventStream
from ..core.gestures import GestureClass
from ..core.labels import GESTURE_THRESHOLD, window_labels
from ..core.surface import WindowConfig, build_all_surfaces, stacked_history
from ..model.network import to_model_input
from ..model.train import Dataset
from ..sim.esim import SimConfig, generate_events
from ..synth.markov import MarkovChain, ScriptConfig, sample_script
from ..synth.rotate import rotate_sequence
from ..synth.scene import SceneConfig
from ..synth.sequence import SynthConfig, SynthSequence, synthesize_sequence

SAMPLES_PER_CLASS_1X = 25_000


def derive_seed(global_seed: int, *keys) -> int:
    """Stable 63-bit seed from a global seed and any labelling keys."""
    text = ":".join(str(k) for k in (global_seed, *keys))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


@dataclass(frozen=True)
class DataConfig:
    width: int = 64
    height: int = 64
    frame_rate: float = 90.0
    multiplier: float = 0.05
    val_fraction: float = 0.2
    brightness: tuple[float, float] = (0.5, 4.0)
    texture_contrast: float = 0.07
    synth: SynthConfig = field(default_factory=SynthConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    script: ScriptConfig = field(default_factory=ScriptConfig)
    window: WindowConfig = field(default_factory=WindowConfig)
    gesture_threshold: float = GESTURE_THRESHOLD
    channels: int = 2

    def n_sequences(self, n_classes: int = 10) -> int:
        """Sequences needed for ``multiplier * 25k`` samples per class on average."""
        total = self.multiplier * SAMPLES_PER_CLASS_1X * n_classes
        return max(1, int(np.ceil(total / self.window.num_windows)))


def simulate_sequence(
    cfg: DataConfig, global_seed: int, split: str, index: int, rotate: bool = False, chain: MarkovChain | None = None
) -> tuple[SynthSequence, EventStream, float]:
    """One scripted sequence and its events; returns (sequence, events, rotation angle)."""
    seed = derive_seed(global_seed, split, index)
    rng = np.random.default_rng(seed)
    chain = chain or MarkovChain.from_weights()
    script = sample_script(chain, int(rng.integers(2**62)), cfg.script)
    scene = SceneConfig(
        width=cfg.width,
        height=cfg.height,
        texture_seed=int(rng.integers(2**31)),
        brightness_factor=float(rng.uniform(*cfg.brightness)),
        camera_path_seed=int(rng.integers(2**31)),
        texture_contrast=cfg.texture_contrast,
    )
    seq = synthesize_sequence(script, scene, cfg.frame_rate, int(rng.integers(2**62)), cfg.synth)
    angle = 0.0
    if rotate:
        seq, angle = rotate_sequence(seq, int(rng.integers(2**62)))
    events = generate_events(seq.frames, cfg.sim, int(rng.integers(2**62)), duration=seq.duration)
    return seq, events, angle


@dataclass(eq=False)
class EncodedSequence:
    x: np.ndarray  # (n_windows, h, w, channels) float16
    labels: np.ndarray  # (n_windows,) 1..10
    bboxes: np.ndarray  # (n_windows, 3) normalised, NaN where no hand
    window_ends: np.ndarray


def encode_sequence(
    events: EventStream,
    frame_times: np.ndarray,
    frame_labels,
    frame_bboxes,
    cfg: DataConfig,
) -> EncodedSequence:
    surfaces = build_all_surfaces(events, cfg.window)
    labels = window_labels(frame_times, frame_labels, cfg.window, events.duration, cfg.gesture_threshold)
    if cfg.channels == 2:
        planes = np.stack([s.values for s in surfaces])
    else:
        planes = np.stack([stacked_history(surfaces, k) for k in range(len(surfaces))])
    x = to_model_input(planes, cfg.channels).astype(np.float16)
    ends = np.array([s.window_end for s in surfaces], np.int64)
    boxes = np.full((len(surfaces), 3), np.nan, np.float32)
    for k, t_end in enumerate(ends):
        # Box of the newest frame strictly inside the window.
        i = int(np.searchsorted(frame_times, t_end, side="left")) - 1
        b = frame_bboxes[max(i, 0)]
        if b is not None:
            boxes[k] = b.normalized(events.width, events.height)
    return EncodedSequence(x, np.array([int(g) for g in labels], np.int64), boxes, ends)


def build_split(
    cfg: DataConfig,
    global_seed: int,
    split: str,
    n_sequences: int,
    rotate: bool = False,
    n_jobs: int = 1,
) -> Dataset:
    """Simulate and encode ``n_sequences`` sequences entirely in memory."""

    def one(i):
        seq, ev, _ = simulate_sequence(cfg, global_seed, split, i, rotate)
        return encode_sequence(ev, seq.frame_times, seq.labels, seq.bboxes, cfg)

    if n_jobs == 1:
        parts = [one(i) for i in range(n_sequences)]
    else:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=n_jobs)(delayed(one)(i) for i in range(n_sequences))
    return concat_encoded(parts)


def concat_encoded(parts: list[EncodedSequence]) -> Dataset:
    bboxes = np.concatenate([p.bboxes for p in parts])
    labels = np.concatenate([p.labels for p in parts])
    present = (labels != int(GestureClass.UNTRACKED)) & np.isfinite(bboxes).all(axis=1)
    return Dataset(np.concatenate([p.x for p in parts]), labels, np.nan_to_num(bboxes), present)

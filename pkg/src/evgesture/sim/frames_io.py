"""Frame directories: raw little-endian float32 planes plus ``manifest.json``."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .esim import FrameSequence

MANIFEST = "manifest.json"


def write_frames(directory, frames: FrameSequence) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(frames.frames):
        name = f"frame_{i:05d}.f32"
        frame.astype("<f4").tofile(directory / name)
        names.append(name)
    manifest = {
        "width": frames.width,
        "height": frames.height,
        "dtype": "float32",
        "layout": "planar-row-major",
        "timestamps_ns": [int(t) for t in frames.timestamps],
        "frames": names,
    }
    path = directory / MANIFEST
    path.write_text(json.dumps(manifest, indent=1))
    return path


def read_frames(directory) -> FrameSequence:
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    if manifest.get("dtype", "float32") != "float32":
        raise ValueError(f"unsupported frame dtype {manifest['dtype']}")
    h, w = manifest["height"], manifest["width"]
    frames = []
    for name in manifest["frames"]:
        data = np.fromfile(directory / name, dtype="<f4")
        if data.size != h * w:
            raise ValueError(f"{name}: expected {h * w} values, found {data.size}")
        frames.append(data.reshape(h, w))
    return FrameSequence(np.stack(frames), np.asarray(manifest["timestamps_ns"], np.int64))

"""Prompted-gesture trials on simulated streams."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.events import EventStream
from ..core.gestures import RETURN_OF, GestureClass
from ..core.surface import MS, WindowConfig
from ..pipeline.dataset import DataConfig, derive_seed
from ..synth.markov import GestureScript, ScriptEntry
from ..synth.rotate import rotate_sequence
from ..synth.scene import SceneConfig
from ..synth.sequence import synthesize_sequence
from ..sim.esim import generate_events
from .metrics import MATCH_WINDOW_NS, PROMPTED, MetricsReport, TrialRecord, aggregate_units, match_and_score
from .sliding import DEBOUNCE_NS, SOFTMAX_THRESHOLD, sliding_inference


@dataclass(frozen=True)
class TrialConfig:
    units: int = 20
    trials_per_unit: int = 10
    trial_ns: int = 2000 * MS
    gap_ns: int = 500 * MS  # spacing so consecutive match windows never overlap
    onset_ns: tuple[int, int] = (250 * MS, 900 * MS)
    gesture_ns: tuple[int, int] = (200 * MS, 333 * MS)
    steepness: tuple[float, ...] = (4.0, 6.0, 8.0, 12.0)
    match_window_ns: int = MATCH_WINDOW_NS

    @property
    def period_ns(self) -> int:
        return self.trial_ns + self.gap_ns


def trial_classes(rng: np.random.Generator, n: int) -> list[GestureClass]:
    """Every prompted class at least once (when n >= 3), the rest uniform, shuffled."""
    base = list(PROMPTED) * (n // len(PROMPTED))
    base += [PROMPTED[i] for i in rng.choice(len(PROMPTED), n - len(base))]
    return [base[i] for i in rng.permutation(len(base))]


def trial_script(g: GestureClass, rng: np.random.Generator, cfg: TrialConfig) -> GestureScript:
    onset = int(rng.integers(cfg.onset_ns[0], cfg.onset_ns[1] + 1))
    d1 = int(rng.integers(cfg.gesture_ns[0], cfg.gesture_ns[1] + 1))
    d2 = int(rng.integers(cfg.gesture_ns[0], cfg.gesture_ns[1] + 1))
    m1, m2 = (float(cfg.steepness[i]) for i in rng.integers(len(cfg.steepness), size=2))
    tail = cfg.trial_ns - onset - d1 - d2
    entries = (
        ScriptEntry(GestureClass.REST, 0, onset, 0.0),
        ScriptEntry(g, onset, d1, m1),
        ScriptEntry(RETURN_OF[g], onset + d1, d2, m2),
        ScriptEntry(GestureClass.REST, onset + d1 + d2, tail, 0.0),
    )
    return GestureScript(entries, cfg.trial_ns)


@dataclass(eq=False)
class Trial:
    record: TrialRecord
    stream: EventStream  # local time, starting at 0


def simulate_unit(
    data_cfg: DataConfig, cfg: TrialConfig, global_seed: int, unit: int, rotate: bool = False, split: str = "trials"
) -> list[Trial]:
    rng = np.random.default_rng(derive_seed(global_seed, split, unit))
    out = []
    for j, g in enumerate(trial_classes(rng, cfg.trials_per_unit)):
        seed = derive_seed(global_seed, split, unit, j)
        r = np.random.default_rng(seed)
        script = trial_script(g, r, cfg)
        scene = SceneConfig(
            width=data_cfg.width,
            height=data_cfg.height,
            texture_seed=int(r.integers(2**31)),
            brightness_factor=float(r.uniform(*data_cfg.brightness)),
            camera_path_seed=int(r.integers(2**31)),
            texture_contrast=data_cfg.texture_contrast,
        )
        seq = synthesize_sequence(script, scene, data_cfg.frame_rate, int(r.integers(2**62)), data_cfg.synth)
        if rotate:
            seq, _ = rotate_sequence(seq, int(r.integers(2**62)))
        events = generate_events(seq.frames, data_cfg.sim, int(r.integers(2**62)), duration=seq.duration)
        t0 = j * cfg.period_ns
        rec = TrialRecord(g, t0, t0 + cfg.match_window_ns, stream=f"unit{unit:03d}/trial{j:02d}")
        out.append(Trial(rec, events))
    return out


def evaluate_unit(
    trials: list[Trial],
    model,
    cfg: TrialConfig,
    window: WindowConfig,
    threshold: float = SOFTMAX_THRESHOLD,
    debounce_ns: int | None = DEBOUNCE_NS,
) -> tuple[MetricsReport, list]:
    """Run sliding inference per trial stream and score on the unit timeline."""
    preds = []
    for tr in trials:
        local = sliding_inference(tr.stream, model, window, threshold, debounce_ns)
        offset = tr.record.prompt_time
        preds += [type(p)(p.gesture, p.time + offset, p.confidence) for p in local]
    return match_and_score(preds, [t.record for t in trials], cfg.match_window_ns), preds


def evaluate_trials(
    units: list[list[Trial]],
    model,
    cfg: TrialConfig,
    window: WindowConfig,
    threshold: float = SOFTMAX_THRESHOLD,
    debounce_ns: int | None = DEBOUNCE_NS,
):
    reports, all_preds = [], []
    for trials in units:
        r, p = evaluate_unit(trials, model, cfg, window, threshold, debounce_ns)
        reports.append(r)
        all_preds.append(p)
    return aggregate_units(reports), reports, all_preds

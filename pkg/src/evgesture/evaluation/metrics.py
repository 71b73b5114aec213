from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core.gestures import NUM_CLASSES, GestureClass
from ..core.surface import MS
from .sliding import PredictionEvent

MATCH_WINDOW_NS = 2000 * MS
PROMPTED = (GestureClass.SWIPE_RIGHT, GestureClass.SWIPE_LEFT, GestureClass.PINCH)
# Reporting groups: right swipe, left swipe, combined pinch.
GROUP_OF = {
    GestureClass.SWIPE_RIGHT: "RS",
    GestureClass.SWIPE_LEFT: "LS",
    GestureClass.PINCH: "CP",
    GestureClass.DOUBLE_PINCH: "CP",
}
GROUPS = ("RS", "LS", "CP")


@dataclass(frozen=True)
class TrialRecord:
    prompted_class: GestureClass
    prompt_time: int
    response_deadline: int
    stream: str = ""

    def __post_init__(self) -> None:
        if self.prompted_class not in PROMPTED:
            raise ValueError(f"{self.prompted_class!r} cannot be prompted")
        if self.response_deadline <= self.prompt_time:
            raise ValueError("deadline must follow the prompt")


def f1_score(tp: int, fp: int, fn: int) -> float:
    d = 2 * tp + fp + fn
    return 2 * tp / d if d else 0.0


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def f1(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)


@dataclass
class MetricsReport:
    per_class: dict[str, ClassCounts] = field(default_factory=dict)
    per_unit_f1: list[float] = field(default_factory=list)
    match_window_ns: int = MATCH_WINDOW_NS

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.per_unit_f1)) if self.per_unit_f1 else 0.0

    @property
    def median_f1(self) -> float:
        return float(np.median(self.per_unit_f1)) if self.per_unit_f1 else 0.0

    @property
    def group_f1(self) -> float:
        """Mean of the RS, LS and CP F1 over the pooled counts."""
        return float(np.mean([self.per_class[g].f1 for g in GROUPS]))

    def to_dict(self) -> dict:
        return dict(
            per_class={k: dict(asdict(v), f1=v.f1) for k, v in self.per_class.items()},
            per_unit_f1=list(self.per_unit_f1),
            mean_f1=self.mean_f1,
            median_f1=self.median_f1,
            pooled_group_f1=self.group_f1 if all(g in self.per_class for g in GROUPS) else None,
            match_window_ns=self.match_window_ns,
        )


def _check_trials(trials: list[TrialRecord]) -> list[TrialRecord]:
    trials = sorted(trials, key=lambda t: t.prompt_time)
    for a, b in zip(trials, trials[1:]):
        if b.prompt_time <= a.response_deadline:
            raise ValueError("trials overlap")
    return trials


def _accepts(trial: TrialRecord, g: GestureClass) -> bool:
    return GROUP_OF.get(g) == GROUP_OF[trial.prompted_class]


def match_and_score(
    predictions: list[PredictionEvent], trials: list[TrialRecord], match_window: int | None = None
) -> MetricsReport:
    """Attribute each prediction once (TP or FP) and each trial once (TP or FN).

    A trial accepts the first prediction of its class within
    ``[prompt_time, prompt_time + match_window]`` (default: its own deadline).
    """
    trials = _check_trials(trials)
    counts = {g: ClassCounts() for g in GROUPS}
    matched = [False] * len(trials)
    starts = np.array([t.prompt_time for t in trials], np.int64)
    for p in sorted(predictions, key=lambda p: p.time):
        group = GROUP_OF.get(p.gesture)
        if group is None:
            raise ValueError(f"{p.gesture!r} is not an emitting class")
        i = int(np.searchsorted(starts, p.time, side="right")) - 1
        hit = False
        if i >= 0:
            t = trials[i]
            end = t.response_deadline if match_window is None else t.prompt_time + match_window
            if not matched[i] and p.time <= end and _accepts(t, p.gesture):
                matched[i] = hit = True
                counts[group].tp += 1
        if not hit:
            counts[group].fp += 1
    for t, m in zip(trials, matched):
        if not m:
            counts[GROUP_OF[t.prompted_class]].fn += 1
    return MetricsReport(counts, [], match_window if match_window is not None else MATCH_WINDOW_NS)


def unit_f1(report: MetricsReport) -> float:
    return float(np.mean([report.per_class[g].f1 for g in GROUPS]))


def aggregate_units(reports: list[MetricsReport]) -> MetricsReport:
    """Pool counts across units and keep each unit's mean F1 for mean/median."""
    pooled = {g: ClassCounts() for g in GROUPS}
    for r in reports:
        for g in GROUPS:
            pooled[g].tp += r.per_class[g].tp
            pooled[g].fp += r.per_class[g].fp
            pooled[g].fn += r.per_class[g].fn
    mw = reports[0].match_window_ns if reports else MATCH_WINDOW_NS
    return MetricsReport(pooled, [unit_f1(r) for r in reports], mw)


@dataclass
class ConfusionResult:
    matrix: np.ndarray
    precision: np.ndarray  # per class, NaN for never-predicted classes
    average_precision: float


def confusion_matrix(predicted, labels) -> ConfusionResult:
    """Rows: true class, columns: argmax class (both 1..10)."""
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predicted.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    m = np.zeros((NUM_CLASSES, NUM_CLASSES), np.int64)
    np.add.at(m, (labels - 1, predicted - 1), 1)
    col = m.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(col > 0, np.diag(m) / np.maximum(col, 1), np.nan)
    avg = float(np.nanmean(prec)) if np.any(col > 0) else 0.0
    return ConfusionResult(m, prec, avg)

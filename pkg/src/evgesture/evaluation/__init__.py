from .bench import LatencyStats, bench_latency, compare_paths
from .metrics import (
    MATCH_WINDOW_NS,
    ClassCounts,
    ConfusionResult,
    MetricsReport,
    TrialRecord,
    aggregate_units,
    confusion_matrix,
    f1_score,
    match_and_score,
)
from .sliding import (
    DEBOUNCE_NS,
    SOFTMAX_THRESHOLD,
    FloatModel,
    IntegerModel,
    PredictionEvent,
    candidates_from_probs,
    debounce,
    sliding_inference,
    window_inputs,
)

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

WARMUP = 10


@dataclass(frozen=True)
class LatencyStats:
    iterations: int
    mean_ms: float
    p50_ms: float
    p99_ms: float

    def to_dict(self) -> dict:
        return asdict(self)


def bench_latency(fn, inputs, iterations: int = 100, warmup: int = WARMUP) -> LatencyStats:
    """Wall-clock per call of ``fn(inputs[i % len(inputs)])``; the first ``warmup`` calls are dropped."""
    if iterations < 100:
        raise ValueError("need at least 100 iterations")
    if not len(inputs):
        raise ValueError("no inputs")
    times = np.empty(iterations)
    for i in range(iterations):
        x = inputs[i % len(inputs)]
        t0 = time.perf_counter()
        fn(x)
        times[i] = time.perf_counter() - t0
    kept = times[warmup:] * 1e3
    return LatencyStats(len(kept), float(kept.mean()), float(np.percentile(kept, 50)), float(np.percentile(kept, 99)))


def compare_paths(paths: dict, inputs, iterations: int = 200, rounds: int = 3) -> dict[str, LatencyStats]:
    """Benchmark several paths in interleaved rounds and keep each path's best-mean round."""
    best: dict[str, LatencyStats] = {}
    for _ in range(rounds):
        for name, fn in paths.items():
            s = bench_latency(fn, inputs, iterations)
            if name not in best or s.mean_ms < best[name].mean_ms:
                best[name] = s
    return best

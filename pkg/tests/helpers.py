"""Shared test utilities: random streams and independent reference implementations."""

import numpy as np

from evgesture.core.events import EventStream


def random_stream(rng, n, width=16, height=12, duration=2_000_000_000):
    t = np.sort(rng.integers(0, duration + 1, n))
    return EventStream.from_arrays(
        width, height, duration, t, rng.integers(0, width, n), rng.integers(0, height, n), rng.integers(0, 2, n)
    )


def brute_force_surface(stream, window_end, window_ns, decay):
    """Per-pixel scan over all events, keeping the newest one inside (end - T_s, end]."""
    h, w = stream.height, stream.width
    out = np.zeros((2 * h, w))
    newest = {}
    for ev in stream:
        age = window_end - ev.t
        if 0 <= age < window_ns:
            key = (ev.polarity, ev.y, ev.x)
            if key not in newest or ev.t >= newest[key]:
                newest[key] = ev.t
    for (p, y, x), t in newest.items():
        row = y if p == 1 else h + y
        out[row, x] = np.exp(-decay * (window_end - t) / window_ns)
    return out


def numerical_grad(f, x, eps=1e-6):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        fp = f()
        x[i] = old - eps
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a, b):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8))

"""Independent reference implementations used only by the tests."""

import numpy as np


def dense_crossing_oracle(log_fn, t0_ns, t1_ns, ref0, c, step_ns=1000, tol=1e-9):
    """Step a per-pixel log-intensity function on a 1 us grid and record threshold crossings.

    ``log_fn(t_ns)`` returns the log intensity of every pixel at time ``t``.
    Returns a list (one per pixel) of (t_ns, polarity) tuples.
    """
    ref = np.array(ref0, dtype=np.float64)
    events = [[] for _ in range(len(ref))]
    grid = list(range(t0_ns + step_ns, t1_ns + 1, step_ns))
    if grid[-1] != t1_ns:
        grid.append(t1_ns)
    for t in grid:
        level = log_fn(t)
        while True:
            up = level - ref >= c - tol
            down = ref - level >= c - tol
            if not (up.any() or down.any()):
                break
            for i in np.flatnonzero(up):
                events[i].append((t, 1))
            for i in np.flatnonzero(down):
                events[i].append((t, 0))
            ref = ref + c * up - c * down
    return events


def markov_occupancy(matrix, root_index, n_states):
    """Expected fraction of script entries in each state, by matrix powers."""
    p = np.zeros(len(matrix))
    p[root_index] = 1.0
    acc = np.zeros(len(matrix))
    for _ in range(n_states):
        acc += p
        p = p @ matrix
    return acc / n_states


def rescaled_sigmoid(t, m):
    s = lambda x: 1.0 / (1.0 + np.exp(-m * (2.0 * x - 1.0)))  # noqa: E731
    return (s(t) - s(0.0)) / (s(1.0) - s(0.0))

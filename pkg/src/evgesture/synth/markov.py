"""Markov-chain gesture scripting.

A script is a fixed number of chain states starting at Rest. Every gesture
may only be followed by its return motion or by Rest, so non-Rest runs are
at most two long and a nine-entry script carries at most six gestures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..core.gestures import GestureClass as G
from ..core.surface import MS

MAX_GESTURE_NS = 333 * MS
MAX_GESTURES = 6
SCRIPT_ENTRIES = 9
PROFILE_STEEPNESS = (4.0, 6.0, 8.0, 12.0)

ALLOWED_SUCCESSORS: dict[G, frozenset[G]] = {
    G.REST: frozenset({G.REST, G.UNKNOWN, G.UNTRACKED, G.PINCH, G.DOUBLE_PINCH, G.SWIPE_LEFT, G.SWIPE_RIGHT}),
    G.PINCH: frozenset({G.PINCH_RETURN, G.REST}),
    G.DOUBLE_PINCH: frozenset({G.PINCH_RETURN, G.REST}),
    G.SWIPE_LEFT: frozenset({G.SWIPE_LEFT_RETURN, G.REST}),
    G.SWIPE_RIGHT: frozenset({G.SWIPE_RIGHT_RETURN, G.REST}),
    G.PINCH_RETURN: frozenset({G.REST}),
    G.SWIPE_LEFT_RETURN: frozenset({G.REST}),
    G.SWIPE_RIGHT_RETURN: frozenset({G.REST}),
    G.UNKNOWN: frozenset({G.REST}),
    G.UNTRACKED: frozenset({G.REST}),
}

DEFAULT_WEIGHTS: dict[G, dict[G, float]] = {
    G.REST: {
        G.UNKNOWN: 0.16,
        G.UNTRACKED: 0.12,
        G.PINCH: 0.15,
        G.DOUBLE_PINCH: 0.13,
        G.SWIPE_LEFT: 0.22,
        G.SWIPE_RIGHT: 0.22,
    },
    G.PINCH: {G.PINCH_RETURN: 1.0},
    G.DOUBLE_PINCH: {G.PINCH_RETURN: 1.0},
    G.SWIPE_LEFT: {G.SWIPE_LEFT_RETURN: 1.0},
    G.SWIPE_RIGHT: {G.SWIPE_RIGHT_RETURN: 1.0},
    G.PINCH_RETURN: {G.REST: 1.0},
    G.SWIPE_LEFT_RETURN: {G.REST: 1.0},
    G.SWIPE_RIGHT_RETURN: {G.REST: 1.0},
    G.UNKNOWN: {G.REST: 1.0},
    G.UNTRACKED: {G.REST: 1.0},
}


class ChainError(ValueError):
    pass


@dataclass(frozen=True)
class MarkovChain:
    """Row-normalised transition matrix over the ten gesture classes."""

    matrix: np.ndarray
    root: G = G.REST

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (len(G), len(G)):
            raise ChainError("transition matrix must be 10x10")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_weights(cls, weights: Mapping = DEFAULT_WEIGHTS) -> "MarkovChain":
        m = np.zeros((len(G), len(G)))
        for src, row in weights.items():
            src = G.parse(src)
            for dst, w in row.items():
                dst = G.parse(dst)
                if w < 0 or not np.isfinite(w):
                    raise ChainError(f"invalid weight {w} on {src.name}->{dst.name}")
                if w > 0 and dst not in ALLOWED_SUCCESSORS[src]:
                    raise ChainError(f"transition {src.name}->{dst.name} is not allowed")
                m[src.index, dst.index] = w
        sums = m.sum(axis=1)
        for g in G:
            if sums[g.index] <= 0:
                raise ChainError(f"row {g.name} has no outgoing weight and cannot be normalised")
        chain = cls(m / sums[:, None])
        chain._check_rest_reachable()
        return chain

    def _check_rest_reachable(self) -> None:
        reach = {self.root}
        changed = True
        while changed:
            changed = False
            for g in G:
                if g not in reach and any(
                    self.matrix[g.index, r.index] > 0 for r in reach
                ):
                    reach.add(g)
                    changed = True
        missing = [g.name for g in G if g not in reach]
        if missing:
            raise ChainError(f"Rest unreachable from {missing}")

    def successors(self, g: G) -> np.ndarray:
        return self.matrix[G(g).index]

    def allowed(self, a: G, b: G) -> bool:
        return self.matrix[G(a).index, G(b).index] > 0


@dataclass(frozen=True)
class ScriptEntry:
    gesture: G
    start: int  # ns
    duration: int  # ns
    steepness: float = 0.0  # sigmoid m, 0 for Rest

    @property
    def end(self) -> int:
        return self.start + self.duration


@dataclass(frozen=True)
class GestureScript:
    entries: tuple[ScriptEntry, ...]
    total_length: int = 2000 * MS

    def __post_init__(self) -> None:
        t = 0
        for e in self.entries:
            if e.start != t or e.duration <= 0:
                raise ValueError("script entries must tile the sequence in order")
            t = e.end
        if t > self.total_length:
            raise ValueError("script exceeds sequence length")

    def gestures(self) -> list[G]:
        return [e.gesture for e in self.entries]

    def non_rest_count(self) -> int:
        return sum(1 for e in self.entries if e.gesture != G.REST)

    def entry_at(self, t: int) -> tuple[int, ScriptEntry]:
        for i, e in enumerate(self.entries):
            if e.start <= t < e.end:
                return i, e
        return len(self.entries) - 1, self.entries[-1]


@dataclass(frozen=True)
class ScriptConfig:
    entries: int = SCRIPT_ENTRIES
    total_length: int = 2000 * MS
    gesture_min_ns: int = 200 * MS
    gesture_max_ns: int = MAX_GESTURE_NS
    steepness: tuple[float, ...] = PROFILE_STEEPNESS


def sample_states(chain: MarkovChain, rng: np.random.Generator, n: int) -> list[G]:
    states = [chain.root]
    while len(states) < n:
        row = chain.successors(states[-1])
        states.append(G.from_index(rng.choice(len(row), p=row)))
    return states


def sample_script(chain: MarkovChain, seed: int, config: ScriptConfig = ScriptConfig()) -> GestureScript:
    rng = np.random.default_rng(seed)
    states = sample_states(chain, rng, config.entries)
    if sum(s != G.REST for s in states) > MAX_GESTURES:
        raise ChainError("chain produced more than six gestures in one script")
    lo, hi = config.gesture_min_ns, config.gesture_max_ns
    durations = np.zeros(len(states), np.int64)
    steep = np.zeros(len(states))
    for i, s in enumerate(states):
        if s != G.REST:
            durations[i] = rng.integers(lo, hi + 1)
            steep[i] = config.steepness[rng.integers(len(config.steepness))]
    rest = np.flatnonzero([s == G.REST for s in states])
    remaining = config.total_length - int(durations.sum())
    if remaining < len(rest):
        raise ChainError("gesture durations leave no room for rest periods")
    # Rest periods share the remaining time; each gets at least 1 ns.
    share = rng.dirichlet(np.ones(len(rest)))
    rest_d = 1 + np.floor(share * (remaining - len(rest))).astype(np.int64)
    rest_d[-1] += remaining - int(rest_d.sum())
    durations[rest] = rest_d
    entries, t = [], 0
    for s, d, m in zip(states, durations, steep):
        entries.append(ScriptEntry(s, t, int(d), float(m)))
        t += int(d)
    return GestureScript(tuple(entries), config.total_length)

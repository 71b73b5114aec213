from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def learning_rate(step: int, total_steps: int, base_lr: float, hold_fraction: float = 0.3) -> float:
    """Constant for the first ``hold_fraction`` of steps, then linear to 0 at the last step."""
    if total_steps <= 1:
        return base_lr
    hold = int(np.floor(hold_fraction * total_steps))
    if step < hold:
        return base_lr
    span = max(total_steps - 1 - hold, 1)
    return base_lr * max(total_steps - 1 - step, 0) / span


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict, lr: float) -> None:
        """In-place update of every parameter that has a gradient."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name, g in grads.items():
            p = params[name]
            g = g.astype(p.dtype, copy=False)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..core.gestures import NUM_CLASSES, GestureClass
from ..core.labels import GESTURE_THRESHOLD
from .config import ModelConfig
from .losses import compute_loss
from .network import Parameters, backward, forward
from .optim import Adam, learning_rate


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hold_fraction: float = 0.3
    gesture_threshold: float = GESTURE_THRESHOLD
    balance: float = 0.0  # 0 = plain shuffle, 1 = fully class-balanced sampling
    finetune_lr_factor: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.balance <= 1.0:
            raise ValueError("balance must be in [0, 1]")


@dataclass(eq=False)
class Dataset:
    """Window samples: NHWC inputs, labels 1..10, normalised boxes, presence flags."""

    x: np.ndarray
    labels: np.ndarray
    bboxes: np.ndarray
    present: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.bboxes = np.asarray(self.bboxes, dtype=np.float32).reshape(-1, 3)
        if self.present is None:
            self.present = self.labels != int(GestureClass.UNTRACKED)
        self.present = np.asarray(self.present, dtype=bool)
        n = len(self.x)
        if not (len(self.labels) == len(self.bboxes) == len(self.present) == n):
            raise ValueError("dataset arrays differ in length")

    def __len__(self) -> int:
        return len(self.x)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.labels[idx], self.bboxes[idx], self.present[idx])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels - 1, minlength=NUM_CLASSES)


@dataclass
class TrainState:
    adam: Adam
    step: int = 0
    total_steps: int = 0
    history: list = field(default_factory=list)


def _order(data: Dataset, cfg: TrainConfig, epoch: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, epoch, 0])
    n = len(data)
    if cfg.balance == 0.0:
        return rng.permutation(n)
    counts = np.maximum(data.class_counts(), 1).astype(np.float64)
    w = counts[data.labels - 1] ** -cfg.balance
    return rng.choice(n, size=n, replace=True, p=w / w.sum())


def steps_per_epoch(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def new_state(cfg: TrainConfig, n_samples: int) -> TrainState:
    return TrainState(Adam(cfg.beta1, cfg.beta2, cfg.eps), 0, cfg.epochs * steps_per_epoch(n_samples, cfg.batch_size))


def train_epoch(
    data: Dataset,
    params: Parameters,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    state: TrainState | None = None,
    epoch: int = 0,
    frozen_stages: tuple[int, ...] = (),
    quantizer=None,
) -> tuple[Parameters, dict]:
    """One pass of minibatch Adam; updates ``params`` in place and returns them."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if state is None:
        state = new_state(replace(cfg, epochs=1), len(data))
    order = _order(data, cfg, epoch)
    dtype = next(iter(params.values())).dtype
    sums = np.zeros(4)
    correct = 0
    for b, start in enumerate(range(0, len(order), cfg.batch_size)):
        idx = np.sort(order[start : start + cfg.batch_size])
        x = data.x[idx].astype(dtype)
        rng = np.random.default_rng([cfg.seed, epoch, b + 1])
        out = forward(x, params, model_cfg, training=True, rng=rng, quantizer=quantizer)
        loss = compute_loss(out, data.bboxes[idx], data.labels[idx], data.present[idx])
        grads = backward(out, loss.d_logits, loss.d_bbox, loss.d_presence_logit, model_cfg, frozen_stages)
        lr = learning_rate(state.step, state.total_steps, cfg.lr, cfg.hold_fraction)
        state.adam.step(params, grads, lr)
        if quantizer is not None and hasattr(quantizer, "after_step"):
            quantizer.after_step()
        state.step += 1
        k = len(idx)
        sums += k * np.array([loss.total, loss.bbox, loss.gesture, loss.presence])
        correct += int((out.class_logits.argmax(1) == data.labels[idx] - 1).sum())
    params.check_finite()
    n = len(order)
    metrics = dict(
        epoch=epoch,
        loss=sums[0] / n,
        bbox_loss=sums[1] / n,
        gesture_loss=sums[2] / n,
        presence_loss=sums[3] / n,
        accuracy=correct / n,
        lr_end=learning_rate(state.step - 1, state.total_steps, cfg.lr, cfg.hold_fraction),
    )
    state.history.append(metrics)
    return params, metrics


def train(
    data: Dataset,
    params: Parameters,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    frozen_stages: tuple[int, ...] = (),
    quantizer=None,
    log=None,
) -> tuple[Parameters, list[dict]]:
    state = new_state(cfg, len(data))
    for epoch in range(cfg.epochs):
        _, m = train_epoch(data, params, model_cfg, cfg, state, epoch, frozen_stages, quantizer)
        if log is not None:
            log(m)
    return params, state.history


FINETUNE_FROZEN = (1, 2, 3)


def finetune(
    params: Parameters, data: Dataset, model_cfg: ModelConfig, cfg: TrainConfig, log=None, quantizer=None
) -> tuple[Parameters, list[dict]]:
    """Train stages 4-5 only, at ``lr * finetune_lr_factor``."""
    ft_cfg = replace(cfg, lr=cfg.lr * cfg.finetune_lr_factor)
    return train(data, params, model_cfg, ft_cfg, frozen_stages=FINETUNE_FROZEN, quantizer=quantizer, log=log)


def predict(
    params: Parameters, x: np.ndarray, model_cfg: ModelConfig, batch_size: int = 256, quantizer=None
) -> dict[str, np.ndarray]:
    """Eval-mode outputs over a large array in fixed-size chunks."""
    dtype = next(iter(params.values())).dtype
    parts = {"probs": [], "logits": [], "bbox": [], "presence": []}
    for s in range(0, len(x), batch_size):
        out = forward(np.asarray(x[s : s + batch_size], dtype=dtype), params, model_cfg, quantizer=quantizer)
        parts["probs"].append(out.probabilities)
        parts["logits"].append(out.class_logits)
        parts["bbox"].append(out.bbox)
        parts["presence"].append(out.hand_presence)
    return {k: np.concatenate(v) if v else np.zeros((0,)) for k, v in parts.items()}

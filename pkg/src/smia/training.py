"""Minibatch SGD training for the reference victims."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .losses import _ce_graph, one_hot
from .models import Model, forward, predict_labels


@dataclass
class TrainConfig:
    lr: float = 0.1
    steps: int = 1000
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("invalid schedule")


def train_sgd(model: Model, images: np.ndarray, labels: np.ndarray,
              schedule: TrainConfig) -> list[float]:
    """Train in place with plain SGD on mean cross entropy.

    Deterministic given the schedule seed: batches are drawn by a seeded
    shuffle, epoch after epoch. Returns the per-step loss curve. Raises if
    the loss goes non-finite, naming the step.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    n = images.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(schedule.seed)
    order = rng.permutation(n)
    cursor = 0
    curve = []
    for step in range(schedule.steps):
        if cursor + schedule.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + schedule.batch_size]
        cursor += schedule.batch_size
        x = ag.Tensor(images[idx])
        logp = ag.log_softmax(model.forward_graph(x), axis=1)
        loss = _ce_graph(logp, one_hot(labels[idx], model.num_classes))
        if not np.isfinite(loss.data):
            raise FloatingPointError(f"training loss diverged at step {step}")
        loss.backward()
        for t in model.params.values():
            t.data = t.data - schedule.lr * t.grad
        curve.append(float(loss.data))
    return curve


def accuracy(model: Model, images: np.ndarray, labels: np.ndarray,
             batch_size: int = 256) -> float:
    """Mean label accuracy (per sample, or per pixel for segmentation)."""
    hits = 0
    total = 0
    for start in range(0, images.shape[0], batch_size):
        chunk = images[start:start + batch_size]
        pred = predict_labels(forward(model, chunk))
        ref = np.asarray(labels[start:start + chunk.shape[0]])
        hits += int((pred == ref).sum())
        total += ref.size
    return hits / total

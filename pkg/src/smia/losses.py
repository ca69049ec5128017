"""Cross-entropy losses and the attack objectives, with input gradients.

The public `cross_entropy` works on probabilities (clamped at 1e-12 before
the log) and accepts hard labels or a soft distribution. Gradient
computation goes through the autograd graph using log-softmax, which is
algebraically the same quantity evaluated stably from the logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from . import smoothing
from .models import Model, Prediction

PROB_FLOOR = 1e-12


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """(N,) -> (N, K) or (N, H, W) -> (N, K, H, W)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"label outside [0, {num_classes})")
    eye = np.eye(num_classes, dtype=np.float64)
    if labels.ndim == 1:
        return eye[labels]
    if labels.ndim == 3:
        return np.moveaxis(eye[labels], -1, 1)
    raise ValueError(f"unsupported label rank {labels.ndim}")


def _soft_target(target, num_classes, shape) -> np.ndarray:
    if isinstance(target, Prediction):
        q = target.probs
    else:
        q = np.asarray(target)
        if q.dtype.kind in "iu":
            q = one_hot(q, num_classes)
    if q.shape != shape:
        raise ValueError(f"target shape {q.shape} does not match prediction {shape}")
    return q.astype(np.float64)


def cross_entropy(pred: Prediction, target) -> float:
    """Mean over samples (and pixels) of -sum_j q_j log p_j."""
    p = np.clip(pred.probs, PROB_FLOOR, None)
    q = _soft_target(target, pred.num_classes, pred.probs.shape)
    per_elem = -(q * np.log(p)).sum(axis=1)
    return float(per_elem.mean())


def _ce_graph(logp: ag.Tensor, q) -> ag.Tensor:
    """Mean CE from log-probabilities; `q` may be a Tensor (soft target in
    the graph) or a constant array."""
    count = logp.data.size // logp.data.shape[1]
    q = q if isinstance(q, ag.Tensor) else ag.constant(q)
    return ag.mul(ag.sum_all(ag.mul(q, logp)), -1.0 / count)


@dataclass
class LossSpec:
    """Scalar objective descriptor for input-gradient computation.

    With `alpha` == 0 (or no kernel) this is the plain deviation loss
    CE(f(x), Y). Otherwise the stabilization term is added: the perturbation
    is `x - x_clean`, smoothed by `kernel`, and the combined objective is
    CE(f(x), Y) - alpha * KL(f(x + residual) || f(x)), the divergence
    between the smoothed-perturbation prediction and the current one. When
    `detach_smoothed_branch` is set the smoothed-branch prediction is a
    constant reference distribution (no gradient flows through it); by
    default the gradient flows through both branches.
    """
    labels: np.ndarray
    alpha: float = 0.0
    kernel: smoothing.GaussianKernel | None = None
    x_clean: np.ndarray | None = None
    detach_smoothed_branch: bool = False

    @property
    def has_stabilization(self) -> bool:
        return self.kernel is not None

    def validate(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be nonnegative, got {self.alpha}")
        if self.has_stabilization and self.x_clean is None:
            raise ValueError("stabilization objective needs x_clean")


def objective_with_gradient(model: Model, batch: np.ndarray, spec: LossSpec):
    """Evaluate the objective and its input gradient in one backward pass.

    Returns (gradient, loss_dev, loss_sta) where loss_sta is the
    stabilization term of the combined objective (i.e. minus the KL
    divergence between the branches), or 0.0 when no stabilization is
    configured.
    """
    spec.validate()
    batch = model.check_batch(batch)
    x = ag.Tensor(batch)
    logits = model.forward_graph(x)
    logp = ag.log_softmax(logits, axis=1)
    q_true = one_hot(np.asarray(spec.labels), model.num_classes)
    loss_dev = _ce_graph(logp, q_true)
    loss = loss_dev
    loss_sta_val = 0.0
    if spec.has_stabilization:
        eta = x + ag.constant(-np.asarray(spec.x_clean, dtype=np.float64))
        residual = smoothing.smoothed_residual_graph(eta, spec.kernel)
        logits_s = model.forward_graph(x + residual)
        if spec.detach_smoothed_branch:
            smoothed = ag.log_softmax(logits_s, axis=1).data
        else:
            smoothed = logits_s
        inner = _kl_graph(logp, smoothed)
        loss_sta_val = -float(inner.data)
        loss = loss + ag.mul(inner, -spec.alpha)
    loss.backward()
    if not np.isfinite(x.grad).all():
        raise FloatingPointError("non-finite input gradient")
    return x.grad, float(loss_dev.data), loss_sta_val


def _kl_graph(logp: ag.Tensor, smoothed) -> ag.Tensor:
    """Mean KL(p_s || p) of the smoothed-branch prediction against the
    current one; `smoothed` is that branch's logits Tensor, or a constant
    array of its log-probabilities when the branch is detached."""
    count = logp.data.size // logp.data.shape[1]
    if isinstance(smoothed, ag.Tensor):
        logq = ag.log_softmax(smoothed, axis=1)
        q = ag.softmax(smoothed, axis=1)
    else:
        logq = ag.constant(smoothed)
        q = ag.constant(np.exp(smoothed))
    diff = logq + ag.mul(logp, -1.0)
    return ag.mul(ag.sum_all(ag.mul(q, diff)), 1.0 / count)


def smoothed_branch_logprobs(model: Model, batch: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Log-probabilities of the smoothed-residual branch f(x + (W*eta - eta))."""
    x = ag.Tensor(model.check_batch(batch))
    eta = x + ag.constant(-np.asarray(spec.x_clean, dtype=np.float64))
    residual = smoothing.smoothed_residual_graph(eta, spec.kernel)
    return ag.log_softmax(model.forward_graph(x + residual), axis=1).data


def objective_value(model: Model, batch: np.ndarray, spec: LossSpec,
                    frozen_logq: np.ndarray | None = None) -> float:
    """Objective evaluated without backprop (used by finite differencing).

    `frozen_logq` pins the smoothed-branch log-probabilities, matching the
    function that a detached-branch gradient differentiates.
    """
    spec.validate()
    batch = model.check_batch(batch)
    logits = model.forward_graph(ag.Tensor(batch))
    logp = ag.log_softmax(logits, axis=1)
    q_true = one_hot(np.asarray(spec.labels), model.num_classes)
    val = float(_ce_graph(logp, q_true).data)
    if spec.has_stabilization:
        logq = (frozen_logq if frozen_logq is not None
                else smoothed_branch_logprobs(model, batch, spec))
        inner = float(_kl_graph(logp, logq).data)
        val -= spec.alpha * inner
    return val


def input_gradient(model: Model, batch: np.ndarray, spec: LossSpec) -> np.ndarray:
    """Gradient of the configured scalar objective with respect to the input."""
    grad, _, _ = objective_with_gradient(model, batch, spec)
    return grad

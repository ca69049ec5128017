"""Central-finite-difference validation of input gradients."""

from __future__ import annotations

import numpy as np

from .losses import LossSpec, input_gradient, objective_value, smoothed_branch_logprobs
from .models import Model

MAX_COORDS = 2000


def finite_diff_check(model: Model, batch: np.ndarray, spec: LossSpec,
                      h: float = 1e-6) -> float:
    """Worst relative error between the analytic input gradient and central
    differences: the largest coordinate-wise deviation divided by the
    numeric gradient's magnitude (inf-norm), with a 1e-8 floor in the
    denominator. Scaling by the gradient's magnitude rather than each entry
    keeps near-zero coordinates from turning floating-point noise in the
    difference quotient into spurious O(1) errors.

    The batch must have at most 2,000 elements (coordinates are enumerated).
    For a detached smoothed branch the differenced function pins that
    branch's prediction at the base point, which is the function that
    gradient belongs to.
    """
    batch = model.check_batch(batch)
    if batch.size > MAX_COORDS:
        raise ValueError(
            f"batch has {batch.size} coordinates, finite differencing is "
            f"limited to {MAX_COORDS}")
    frozen = None
    if spec.has_stabilization and spec.detach_smoothed_branch:
        frozen = smoothed_branch_logprobs(model, batch, spec)
    grad = input_gradient(model, batch, spec)
    flat = batch.ravel().copy()
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = objective_value(model, flat.reshape(batch.shape), spec, frozen)
        flat[i] = orig - h
        down = objective_value(model, flat.reshape(batch.shape), spec, frozen)
        flat[i] = orig
        numeric[i] = (up - down) / (2.0 * h)
    denom = max(np.abs(numeric).max(), 1e-8)
    return float(np.max(np.abs(grad.ravel() - numeric)) / denom)

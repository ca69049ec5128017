"""Cross-entropy values, objective gradients, degenerate stabilization."""

import numpy as np
import pytest

from smia.gradcheck import finite_diff_check
from smia.losses import (LossSpec, cross_entropy, input_gradient,
                         objective_value, objective_with_gradient, one_hot)
from smia.models import LinearSoftmax, Prediction, forward
from smia.smoothing import make_gaussian_kernel

LN2 = 0.6931471805599453
LN10 = 2.302585092994046


def test_one_hot_shapes():
    assert np.array_equal(one_hot(np.array([1, 0]), 3),
                          [[0, 1, 0], [1, 0, 0]])
    seg = one_hot(np.zeros((2, 4, 4), dtype=int), 2)
    assert seg.shape == (2, 2, 4, 4)
    assert np.array_equal(seg[:, 0], np.ones((2, 4, 4)))
    with pytest.raises(ValueError):
        one_hot(np.array([3]), 3)


def test_cross_entropy_uniform_is_log_k():
    pred = Prediction(np.full((4, 10), 0.1), 10)
    assert abs(cross_entropy(pred, np.zeros(4, dtype=int)) - LN10) < 1e-12
    pred2 = Prediction(np.full((2, 2), 0.5), 2)
    assert abs(cross_entropy(pred2, np.array([0, 1])) - LN2) < 1e-12


def test_cross_entropy_confident_correct_is_small():
    p = np.array([[1.0 - 1e-9, 1e-9]])
    pred = Prediction(p, 2)
    assert cross_entropy(pred, np.array([0])) < 1e-8


def test_cross_entropy_soft_target():
    pred = Prediction(np.array([[0.5, 0.5]]), 2)
    val = cross_entropy(pred, np.array([[0.25, 0.75]]))
    assert abs(val - LN2) < 1e-12


def test_cross_entropy_clamps_zero_probability():
    pred = Prediction(np.array([[1.0, 0.0]]), 2)
    val = cross_entropy(pred, np.array([1]))
    assert np.isfinite(val) and val > 20  # -log(1e-12) ~ 27.6


def test_deviation_gradient_linear_oracle(linear_victim, rng):
    # linear softmax: dCE/dx = W (p - y) exactly
    x = rng.uniform(0, 1, (3, 1, 8, 8))
    y = np.array([0, 1, 2])
    spec = LossSpec(labels=y)
    grad, loss_dev, loss_sta = objective_with_gradient(linear_victim, x, spec)
    p = forward(linear_victim, x).probs
    w = linear_victim.params["w"].data
    expect = ((p - one_hot(y, 5)) @ w.T / 3).reshape(x.shape)
    assert np.allclose(grad, expect, atol=1e-12)
    assert loss_sta == 0.0
    assert abs(loss_dev - objective_value(linear_victim, x, spec)) < 1e-12


def test_objective_gradient_passes_finite_diff(linear_victim, rng):
    x = rng.uniform(0.2, 0.8, (2, 1, 8, 8))
    y = np.array([1, 3])
    kernel = make_gaussian_kernel(3, 1.0)
    for detach in (True, False):
        spec = LossSpec(labels=y, alpha=0.7, kernel=kernel, x_clean=x - 0.01,
                        detach_smoothed_branch=detach)
        rel = finite_diff_check(linear_victim, x, spec)
        assert rel < 1e-5


def test_stabilization_needs_x_clean():
    spec = LossSpec(labels=np.array([0]), alpha=1.0,
                    kernel=make_gaussian_kernel(3, 1.0))
    with pytest.raises(ValueError):
        spec.validate()
    with pytest.raises(ValueError):
        LossSpec(labels=np.array([0]), alpha=-1.0).validate()


def test_alpha_zero_kernel_ignored(linear_victim, rng):
    x = rng.uniform(0, 1, (2, 1, 8, 8))
    y = np.array([0, 4])
    g_plain = input_gradient(linear_victim, x, LossSpec(labels=y))
    kernel = make_gaussian_kernel(3, 1.0)
    spec = LossSpec(labels=y, alpha=0.0, kernel=kernel, x_clean=x)
    g_sta = input_gradient(linear_victim, x, spec)
    # alpha 0 zeroes the stabilization term's contribution exactly
    assert np.allclose(g_plain, g_sta, atol=1e-15)


def test_size_one_kernel_stabilization_gradient(linear_victim, rng):
    # eta' == 0: the smoothed branch coincides with the current point
    x = rng.uniform(0, 1, (2, 1, 8, 8))
    y = np.array([2, 3])
    kernel = make_gaussian_kernel(1, 1.0)
    spec = LossSpec(labels=y, alpha=1.0, kernel=kernel, x_clean=x - 0.02)
    grad, loss_dev, loss_sta = objective_with_gradient(linear_victim, x, spec)
    g_plain = input_gradient(linear_victim, x, LossSpec(labels=y))
    assert np.allclose(grad, g_plain, atol=1e-12)
    assert np.array_equal(np.sign(grad), np.sign(g_plain))

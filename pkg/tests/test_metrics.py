"""Metric oracles: hand-counted rates, variance, cosine properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smia.attacks import AttackConfig, AttackTrace
from smia.metrics import (classification_metrics, cosine_similarity,
                          jaccard_index, mean_jaccard,
                          mean_perturbation_variance, perturbation_variance,
                          positive_cosine_fraction, step_cosines)


def trace_from_steps(steps):
    """Build a minimal AttackTrace whose per-iteration steps are given."""
    x0 = np.zeros_like(steps[0])
    tr = AttackTrace(config=AttackConfig(method="dev"), x_clean=x0)
    x = x0
    for s in steps:
        x = x + s
        tr.record(x - s, x, None, 0.0, 0.0, 0.0, None)
    return tr


def test_accuracy_and_fpr_hand_counts():
    pred = np.array([0, 1, 1, 0])
    gt = np.array([0, 1, 0, 2])
    out = classification_metrics(pred, gt, positive_set={1, 2})
    # 2 of 4 correct; negatives are the two gt-0 samples, one predicted positive
    assert out["accuracy"] == 0.5
    assert out["fpr"] == 0.5


def test_accuracy_hand_counts_three_quarters():
    out = classification_metrics([1, 2, 3, 4], [1, 2, 3, 0])
    assert out["accuracy"] == 0.75


def test_fpr_with_no_negatives_is_zero():
    out = classification_metrics([1, 1], [1, 2], positive_set={1, 2})
    assert out["fpr"] == 0.0


def test_classification_metrics_rejects_bad_input():
    with pytest.raises(ValueError):
        classification_metrics([], [])
    with pytest.raises(ValueError):
        classification_metrics([1, 2], [1])


def test_jaccard_hand_count():
    pred = np.array([[1, 1, 0], [0, 1, 0]])
    gt = np.array([[1, 0, 1], [1, 1, 0]])
    # intersection {(0,0),(1,1)} = 2, union 5
    assert jaccard_index(pred, gt) == pytest.approx(2 / 5)


def test_jaccard_both_empty_is_one():
    z = np.zeros((3, 3), int)
    assert jaccard_index(z, z) == 1.0
    assert jaccard_index(np.ones((3, 3), int), z) == 0.0


def test_mean_jaccard_averages():
    a = [np.array([[1, 0]]), np.array([[1, 1]])]
    b = [np.array([[1, 0]]), np.array([[1, 0]])]
    assert mean_jaccard(a, b) == pytest.approx((1.0 + 0.5) / 2)


def test_perturbation_variance_two_pass_oracle(rng):
    eta = rng.standard_normal((1, 5, 5))
    mean = eta.sum() / eta.size
    expected = ((eta - mean) ** 2).sum() / eta.size
    assert perturbation_variance(eta) == pytest.approx(expected, rel=1e-12)
    assert perturbation_variance(np.full((2, 2), 3.0)) == 0.0


def test_mean_perturbation_variance_per_image():
    eta = np.stack([np.zeros((1, 2, 2)), np.array([[[0.0, 1.0], [0.0, 1.0]]])])
    tr = trace_from_steps([eta])
    assert mean_perturbation_variance([tr]) == pytest.approx(0.125)


def test_cosine_similarity_hand_values():
    assert cosine_similarity([1, 0], [0, 1]) == 0.0
    assert cosine_similarity([1, 1], [1, 1]) == pytest.approx(1.0)
    assert cosine_similarity([1, 0], [-1, 0]) == pytest.approx(-1.0)
    assert cosine_similarity([0, 0], [1, 0]) == 0.0  # degenerate convention


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.01, 100))
@settings(max_examples=50, deadline=None)
def test_cosine_invariant_under_positive_scaling(vals, scale):
    a = np.array(vals)
    if np.linalg.norm(a) < 1e-6:
        return
    b = np.array([1.0, 2.0, -0.5])
    assert cosine_similarity(a, b) == pytest.approx(
        cosine_similarity(scale * a, b), abs=1e-9)


def test_step_cosines_shape_and_values():
    s1 = np.ones((2, 1, 2, 2))
    s2 = np.ones((2, 1, 2, 2))
    s2[1] *= -1
    tr = trace_from_steps([s1, s2])
    cos = step_cosines(tr)
    assert cos.shape == (2, 1)
    assert cos[0, 0] == pytest.approx(1.0)
    assert cos[1, 0] == pytest.approx(-1.0)
    assert positive_cosine_fraction([tr]) == 0.5


def test_step_cosines_needs_two_iterations():
    tr = trace_from_steps([np.ones((1, 1, 2, 2))])
    with pytest.raises(ValueError):
        step_cosines(tr)


@given(st.integers(0, 2 ** 16 - 1))
@settings(max_examples=25, deadline=None)
def test_positive_cosine_fraction_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    steps = [rng.standard_normal((3, 1, 2, 2)) for _ in range(4)]
    frac = positive_cosine_fraction([trace_from_steps(steps)])
    assert 0.0 <= frac <= 1.0

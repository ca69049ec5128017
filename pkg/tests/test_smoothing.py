"""Gaussian kernel construction and same-size smoothing oracles."""

import numpy as np
import pytest

import smia.autograd as ag
from smia.smoothing import (GaussianKernel, convolve_same, convolve_same_graph,
                            make_gaussian_kernel, smoothed_residual,
                            smoothed_residual_graph)


def test_kernel_3x3_sigma1_hand_values():
    # exp(0)=1, exp(-1/2), exp(-1) normalized over the 3x3 grid
    k = make_gaussian_kernel(3, 1.0)
    assert abs(k.weights[1, 1] - 0.20418) < 1e-5
    assert abs(k.weights[0, 1] - 0.12384) < 1e-5
    assert abs(k.weights[0, 0] - 0.07511) < 1e-5


def test_kernel_normalized_symmetric():
    for size, sigma in [(1, 0.3), (3, 1.0), (5, 1.0), (7, 2.5)]:
        k = make_gaussian_kernel(size, sigma)
        assert abs(k.weights.sum() - 1.0) < 1e-12
        assert np.array_equal(k.weights, k.weights.T)
        assert np.array_equal(k.weights, k.weights[::-1, ::-1])
        assert (k.weights > 0).all()


def test_kernel_rejects_even_or_nonpositive():
    with pytest.raises(ValueError):
        make_gaussian_kernel(4, 1.0)
    with pytest.raises(ValueError):
        make_gaussian_kernel(0, 1.0)
    with pytest.raises(ValueError):
        make_gaussian_kernel(3, 0.0)


def test_size_one_kernel_is_identity(rng):
    k = make_gaussian_kernel(1, 1.0)
    field = rng.standard_normal((2, 1, 6, 6))
    out = convolve_same(field, k)
    assert np.array_equal(out, field)
    assert np.array_equal(smoothed_residual(field, k), np.zeros_like(field))


def test_convolve_matches_scipy_mirror(rng):
    pytest.importorskip("scipy")
    from scipy import ndimage
    field = rng.standard_normal((9, 11))
    for size, sigma in [(3, 0.8), (5, 1.0), (7, 2.0)]:
        k = make_gaussian_kernel(size, sigma)
        ours = convolve_same(field[None, None], k)[0, 0]
        ref = ndimage.correlate(field, k.weights, mode="mirror")
        assert np.allclose(ours, ref, atol=1e-12)


def test_convolve_preserves_constant_field():
    k = make_gaussian_kernel(5, 1.3)
    field = np.full((1, 1, 8, 8), 2.5)
    assert np.allclose(convolve_same(field, k), 2.5)
    assert np.allclose(smoothed_residual(field, k), 0.0, atol=1e-12)


def test_convolve_is_linear(rng):
    k = make_gaussian_kernel(5, 1.0)
    a = rng.standard_normal((1, 1, 10, 10))
    b = rng.standard_normal((1, 1, 10, 10))
    lhs = convolve_same(2.0 * a + 3.0 * b, k)
    rhs = 2.0 * convolve_same(a, k) + 3.0 * convolve_same(b, k)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_kernel_larger_than_field_rejected():
    k = make_gaussian_kernel(7, 1.0)
    with pytest.raises(ValueError):
        convolve_same(np.zeros((1, 1, 5, 5)), k)


def test_graph_path_matches_array_path(rng):
    k = make_gaussian_kernel(5, 1.0)
    field = rng.standard_normal((2, 1, 8, 8))
    t = ag.Tensor(field)
    assert np.array_equal(convolve_same_graph(t, k).data, convolve_same(field, k))
    assert np.array_equal(smoothed_residual_graph(t, k).data,
                          smoothed_residual(field, k))


def test_graph_gradient_is_adjoint_correlation(rng):
    # d(sum W*eta)/d(eta) column sums equal 1 for an interior-dominated field
    k = make_gaussian_kernel(3, 1.0)
    t = ag.Tensor(rng.standard_normal((1, 1, 6, 6)))
    ag.sum_all(convolve_same_graph(t, k)).backward()
    assert np.allclose(t.grad.sum(), 36.0)

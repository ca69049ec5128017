"""Gaussian smoothing of perturbation fields.

Builds normalized isotropic Gaussian kernels and applies same-size 2D
cross-correlation with reflect padding (mirror without repeating the border
pixel), per channel. ``smoothed_residual`` returns the smoothed field minus
the original field. Both a plain-array path and a graph path (for gradient
flow through the stabilization objective) are provided.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag


@dataclass(frozen=True)
class GaussianKernel:
    size: int
    sigma: float
    weights: np.ndarray  # size x size, sums to 1

    @property
    def radius(self) -> int:
        return self.size // 2


def make_gaussian_kernel(size: int, sigma: float) -> GaussianKernel:
    """Normalized isotropic Gaussian weights on a size x size grid.

    `size` must be odd and positive; `sigma` positive.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"kernel sigma must be positive, got {sigma}")
    c = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64)
    d2 = (coords[:, None] - c) ** 2 + (coords[None, :] - c) ** 2
    w = np.exp(-d2 / (2.0 * sigma * sigma))
    w /= w.sum()
    return GaussianKernel(size=size, sigma=float(sigma), weights=w)


def _check_fits(field_shape, kernel: GaussianKernel):
    h, w = field_shape[-2], field_shape[-1]
    if kernel.size > min(h, w):
        raise ValueError(
            f"kernel size {kernel.size} exceeds spatial extent {h}x{w}")


def convolve_same(field: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Same-size per-channel correlation with reflect padding.

    Accepts any array whose two trailing axes are spatial (H, W).
    """
    field = np.asarray(field, dtype=np.float64)
    _check_fits(field.shape, kernel)
    if kernel.size == 1:
        return field * kernel.weights[0, 0]
    return convolve_same_graph(ag.Tensor(field), kernel).data


def smoothed_residual(eta: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """W*eta - eta, elementwise."""
    eta = np.asarray(eta, dtype=np.float64)
    return convolve_same(eta, kernel) - eta


def convolve_same_graph(field: ag.Tensor, kernel: GaussianKernel) -> ag.Tensor:
    """Differentiable variant of `convolve_same` on a graph tensor."""
    _check_fits(field.data.shape, kernel)
    if kernel.size == 1:
        return ag.mul(field, float(kernel.weights[0, 0]))
    padded = ag.reflect_pad2(field, kernel.radius)
    return ag.kernel_corr2_valid(padded, kernel.weights)


def smoothed_residual_graph(eta: ag.Tensor, kernel: GaussianKernel) -> ag.Tensor:
    return convolve_same_graph(eta, kernel) - eta

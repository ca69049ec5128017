"""Numerical verification of the KL / Fisher-information reading of the
stabilization objective.

The output-space Fisher matrix of a softmax prediction is computed by exact
enumeration over the K outcomes (it equals diag(1/p)); its trace is the sum
of reciprocal probabilities, minimized on the simplex by the uniform vector.
The input-space Fisher matrix J^T G_f J is built from per-class
log-probability gradients on diagnostic-scale models, and `taylor_gap`
measures how well 1/2 d^T G d t^2 tracks the true KL divergence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .models import Model

PROB_FLOOR = 1e-12
MAX_INPUT_DIM = 2000


@dataclass
class FisherReport:
    probs: np.ndarray
    g_f: np.ndarray                       # K x K
    trace_direct: float                   # sum 1/p_i
    jacobian: np.ndarray | None = None    # K x input-dim
    g_x: np.ndarray | None = None         # input-dim square
    taylor_gaps: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "probs": self.probs.tolist(),
            "g_f": self.g_f.tolist(),
            "trace_g_f": float(np.trace(self.g_f)),
            "trace_direct": self.trace_direct,
            "g_x_eigenvalues": (np.linalg.eigvalsh(self.g_x).tolist()
                                if self.g_x is not None else None),
            "taylor_gaps": [[t, g] for t, g in self.taylor_gaps],
        }


def _check_simplex(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("expected a single probability vector")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("input is not on the probability simplex")
    return np.clip(p, PROB_FLOOR, None)


def fisher_output_matrix(p) -> np.ndarray:
    """E_y[(grad_p log p_y)(grad_p log p_y)^T] by enumeration over the K
    outcomes. Analytically diag(1/p)."""
    p = _check_simplex(p)
    k = p.size
    g = np.zeros((k, k))
    for y in range(k):
        score = np.zeros(k)
        score[y] = 1.0 / p[y]          # grad_p log p_y
        g += p[y] * np.outer(score, score)
    return g


def fisher_trace(p) -> float:
    """sum_i 1/p_i with the probability floor applied."""
    return float((1.0 / _check_simplex(p)).sum())


def kl_divergence(p, q) -> float:
    """sum_i p_i log(p_i / q_i); zero-probability p terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("shape mismatch between distributions")
    q = np.clip(q, PROB_FLOOR, None)
    mask = p > 0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def _log_prob_jacobian(model: Model, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows grad_x log p_k for one image, plus the probabilities."""
    xt = ag.Tensor(x)
    logp = ag.log_softmax(model.forward_graph(xt), axis=1)
    k = model.num_classes
    jac = np.empty((k, x.size))
    for c in range(k):
        seed = np.zeros_like(logp.data)
        seed[0, c] = 1.0
        logp.backward(seed)
        jac[c] = xt.grad.ravel()
    return jac, np.exp(logp.data[0])


def input_fisher(model: Model, x_tilde: np.ndarray) -> FisherReport:
    """Input-space Fisher matrix J^T G_f J for a single diagnostic-scale
    image, with J the probability Jacobian built from per-class
    log-probability input gradients."""
    x = model.check_batch(np.asarray(x_tilde, dtype=np.float64))
    if x.shape[0] != 1:
        raise ValueError("input_fisher expects a single image")
    if x.size > MAX_INPUT_DIM:
        raise ValueError(
            f"input has {x.size} dims; use a diagnostic-scale model "
            f"(<= {MAX_INPUT_DIM})")
    jac_log, p = _log_prob_jacobian(model, x)
    jac = p[:, None] * jac_log                 # rows grad_x p_k
    g_f = fisher_output_matrix(p)
    g_x = jac.T @ g_f @ jac
    return FisherReport(probs=p, g_f=g_f, trace_direct=fisher_trace(p),
                        jacobian=jac, g_x=g_x)


def taylor_gap(model: Model, x_tilde: np.ndarray, direction: np.ndarray,
               scales) -> list[tuple[float, float]]:
    """|KL(f(x), f(x + t d)) - 1/2 t^2 d^T G_x d| for each scale t.

    `direction` is normalized to unit l2 norm. KL is evaluated by forward
    passes, the quadratic by the input-space Fisher matrix at x.
    """
    x = model.check_batch(np.asarray(x_tilde, dtype=np.float64))
    d = np.asarray(direction, dtype=np.float64).ravel()
    if d.size != x.size:
        raise ValueError("direction size does not match input")
    d = d / np.linalg.norm(d)
    report = input_fisher(model, x)
    quad_coeff = 0.5 * float(d @ report.g_x @ d)

    def probs_at(pt):
        t = ag.Tensor(pt)
        return ag.softmax(model.forward_graph(t), axis=1).data[0]

    p0 = probs_at(x)
    gaps = []
    for t in scales:
        pt = x + t * d.reshape(x.shape)
        gap = abs(kl_divergence(p0, probs_at(pt)) - quad_coeff * t * t)
        gaps.append((float(t), float(gap)))
    return gaps


def uniform_gap(pred_sequence) -> list[float]:
    """Per-element l2 distance to the uniform vector [1/K, ..., 1/K]."""
    seq = list(pred_sequence)
    if not seq:
        raise ValueError("empty prediction sequence")
    out = []
    for p in seq:
        p = np.asarray(p, dtype=np.float64)
        out.append(float(np.linalg.norm(p - 1.0 / p.size)))
    return out


def kl_to_uniform(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    return kl_divergence(p, np.full(p.size, 1.0 / p.size))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, v.size + 1) > 0)[0][-1]
    theta = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + theta, 0.0)


def minimize_reciprocal_sum(k: int, start=None, lr: float | None = None,
                            steps: int = 20000, tol: float = 1e-12) -> np.ndarray:
    """Projected gradient descent on sum_i 1/p_i over the simplex.

    Verifies the attractor claim: the minimizer is the uniform vector. The
    default learning rate scales with the curvature 2 k^3 at the optimum so
    the iteration contracts for any k; steps are capped in l-inf norm to
    survive near-boundary starts.
    """
    if lr is None:
        lr = 0.25 / k ** 3
    if start is None:
        v = np.linspace(1.0, 2.0, k)
        p = v / v.sum()
    else:
        p = project_simplex(np.asarray(start, dtype=np.float64))
    for _ in range(steps):
        grad = -1.0 / np.clip(p, PROB_FLOOR, None) ** 2
        step = lr * grad
        peak = np.abs(step).max()
        if peak > 0.1:
            step *= 0.1 / peak
        nxt = project_simplex(p - step)
        if np.abs(nxt - p).max() < tol:
            p = nxt
            break
        p = nxt
    return p

"""Perturbation generation: FGSM, iterative sign-step (dev/pgd), the
stabilized variant (smia), and DeepFool.

All sign-step methods share one loop: ascend the configured objective by
epsilon * sign(input gradient) and clip to [0, 1] after every step. The
stabilized method uses the plain deviation objective on its first iteration
and adds the smoothing term from the second iteration on, with the
perturbation taken as the accumulated x_adv - x_clean. Every run emits a
full per-iteration trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .losses import LossSpec, objective_with_gradient
from .models import Model, Prediction, forward
from .smoothing import GaussianKernel, make_gaussian_kernel, smoothed_residual

METHODS = ("fgsm", "dev", "pgd", "smia", "deepfool")


@dataclass
class AttackConfig:
    method: str = "smia"
    epsilon: float = 0.02          # per-step magnitude, pixel units
    iterations: int = 10
    alpha: float = 1.0
    kernel_size: int = 5
    kernel_sigma: float = 1.0
    random_start: bool = False     # pgd only
    seed: int = 0
    deepfool_overshoot: float = 0.02
    detach_smoothed_branch: bool = False

    def validate(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.method != "deepfool" and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def kernel(self) -> GaussianKernel:
        return make_gaussian_kernel(self.kernel_size, self.kernel_sigma)


@dataclass
class AttackTrace:
    """Per-iteration record of one attack run on one batch.

    Index t of each list is iteration t+1; `x_clean` is the unperturbed
    batch. Loss values are evaluated at the iterate the step was computed
    from; `preds` snapshots the model on the post-step iterate.
    """
    config: AttackConfig
    x_clean: np.ndarray
    x_adv: list[np.ndarray] = field(default_factory=list)
    eta: list[np.ndarray] = field(default_factory=list)
    steps: list[np.ndarray] = field(default_factory=list)
    residuals: list[np.ndarray] = field(default_factory=list)
    loss_dev: list[float] = field(default_factory=list)
    loss_sta: list[float] = field(default_factory=list)
    loss_total: list[float] = field(default_factory=list)
    preds: list[np.ndarray] = field(default_factory=list)

    @property
    def final_adv(self) -> np.ndarray:
        return self.x_adv[-1]

    @property
    def final_eta(self) -> np.ndarray:
        return self.eta[-1]

    def record(self, x_prev, x_new, residual, l_dev, l_sta, alpha, probs):
        self.x_adv.append(x_new.copy())
        self.eta.append(x_new - self.x_clean)
        self.steps.append(x_new - x_prev)
        if residual is not None:
            self.residuals.append(residual.copy())
        self.loss_dev.append(l_dev)
        self.loss_sta.append(l_sta)
        self.loss_total.append(l_dev + alpha * l_sta)
        self.preds.append(probs)

    def scalar_rows(self) -> list[dict]:
        rows = []
        for t in range(len(self.x_adv)):
            row = {
                "iteration": t + 1,
                "loss_dev": self.loss_dev[t],
                "loss_sta": self.loss_sta[t],
                "loss_total": self.loss_total[t],
                "step_linf": float(np.abs(self.steps[t]).max()),
                "eta_var_mean": float(np.mean(
                    [v.var() for v in self.eta[t].reshape(self.eta[t].shape[0], -1)])),
            }
            if t >= 1:
                cosines = []
                for i in range(self.steps[t].shape[0]):
                    a = self.steps[t - 1][i].ravel()
                    b = self.steps[t][i].ravel()
                    na, nb = np.linalg.norm(a), np.linalg.norm(b)
                    cosines.append(float(a @ b / (na * nb))
                                   if na > 1e-12 and nb > 1e-12 else 0.0)
                row["step_cos_mean"] = float(np.mean(cosines))
            rows.append(row)
        return rows


def _sign_step(x, grad, eps):
    return np.clip(x + eps * np.sign(grad), 0.0, 1.0)


def _run_sign_attack(model: Model, x: np.ndarray, labels: np.ndarray,
                     cfg: AttackConfig) -> AttackTrace:
    x0 = model.check_batch(x)
    kernel = cfg.kernel() if cfg.method == "smia" else None
    trace = AttackTrace(config=cfg, x_clean=x0.copy())
    xt = x0.copy()
    if cfg.method == "pgd" and cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        xt = np.clip(x0 + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x0.shape),
                     0.0, 1.0)
    budget = cfg.iterations * cfg.epsilon
    for t in range(cfg.iterations):
        use_sta = cfg.method == "smia" and t >= 1
        spec = LossSpec(labels=labels,
                        alpha=cfg.alpha if use_sta else 0.0,
                        kernel=kernel if use_sta else None,
                        x_clean=x0 if use_sta else None,
                        detach_smoothed_branch=cfg.detach_smoothed_branch)
        grad, l_dev, l_sta = objective_with_gradient(model, xt, spec)
        x_prev = xt
        xt = _sign_step(xt, grad, cfg.epsilon)
        if cfg.method == "pgd":
            xt = np.clip(x0 + np.clip(xt - x0, -budget, budget), 0.0, 1.0)
        residual = smoothed_residual(xt - x0, kernel) if kernel is not None else None
        probs = forward(model, xt).probs
        trace.record(x_prev, xt, residual, l_dev, l_sta,
                     cfg.alpha if use_sta else 0.0, probs)
    return trace


def run_fgsm(model: Model, x: np.ndarray, labels: np.ndarray,
             epsilon: float) -> AttackTrace:
    """Single sign step on the deviation loss; sign(0) = 0 leaves pixels
    untouched."""
    cfg = AttackConfig(method="fgsm", epsilon=epsilon, iterations=1)
    cfg.validate()
    return _run_sign_attack(model, x, labels, cfg)


def run_iterative_dev(model: Model, x: np.ndarray, labels: np.ndarray,
                      cfg: AttackConfig) -> AttackTrace:
    """T sign steps on the deviation loss; the pgd variant adds optional
    random start and an l-inf projection of radius iterations * epsilon."""
    cfg.validate()
    if cfg.method not in ("dev", "pgd"):
        raise ValueError(f"run_iterative_dev got method {cfg.method!r}")
    return _run_sign_attack(model, x, labels, cfg)


def run_smia(model: Model, x: np.ndarray, labels: np.ndarray,
             cfg: AttackConfig) -> AttackTrace:
    """Deviation objective on iteration 1, deviation plus alpha-weighted
    stabilization from iteration 2 on. The stabilization residual is
    recomputed from the accumulated perturbation every iteration."""
    cfg.validate()
    if cfg.method != "smia":
        raise ValueError(f"run_smia got method {cfg.method!r}")
    cfg.kernel()  # validates size/sigma up front
    return _run_sign_attack(model, x, labels, cfg)


def run_deepfool(model: Model, x: np.ndarray, cfg: AttackConfig,
                 labels: np.ndarray | None = None) -> AttackTrace:
    """Multi-class linearized minimal-perturbation attack.

    Iterates per image until the predicted label flips or `cfg.iterations`
    is reached; the accumulated perturbation is scaled by
    (1 + deepfool_overshoot). Images whose clean prediction already differs
    from `labels` (when given) are left untouched. Classification only.
    """
    cfg.validate()
    if model.segmentation:
        raise ValueError("deepfool supports classification victims only")
    x0 = model.check_batch(x)
    n = x0.shape[0]
    clean_pred = forward(model, x0).probs.argmax(axis=1)
    active = np.ones(n, dtype=bool)
    if labels is not None:
        active &= clean_pred == np.asarray(labels)
    r_total = np.zeros_like(x0)
    trace = AttackTrace(config=cfg, x_clean=x0.copy())
    over = 1.0 + cfg.deepfool_overshoot
    k_classes = model.num_classes
    for _ in range(cfg.iterations):
        x_prev = np.clip(x0 + over * r_total, 0.0, 1.0)
        for i in range(n):
            if not active[i]:
                continue
            xi = np.clip(x0[i:i + 1] + over * r_total[i:i + 1], 0.0, 1.0)
            xt = ag.Tensor(xi)
            logits = model.forward_graph(xt)
            z = logits.data[0]
            k0 = clean_pred[i]
            if z.argmax() != k0:
                active[i] = False
                continue
            grads = np.empty((k_classes,) + xi.shape[1:])
            for k in range(k_classes):
                seed = np.zeros_like(logits.data)
                seed[0, k] = 1.0
                logits.backward(seed)
                grads[k] = xt.grad[0]
            best_ratio, best_step = np.inf, None
            for k in range(k_classes):
                if k == k0:
                    continue
                w = grads[k] - grads[k0]
                wnorm = np.linalg.norm(w)
                if wnorm < 1e-12:
                    continue
                fk = z[k] - z[k0]
                ratio = abs(fk) / wnorm
                if ratio < best_ratio:
                    best_ratio = ratio
                    # Pad the boundary distance so the step strictly crosses
                    # the linearized boundary; without it the iterates can
                    # converge onto the boundary with a vanishing step and
                    # never flip.
                    best_step = ((abs(fk) + 1e-4) / wnorm ** 2) * w
            if best_step is not None:
                r_total[i] += best_step
        x_new = np.clip(x0 + over * r_total, 0.0, 1.0)
        probs = forward(model, x_new).probs
        trace.record(x_prev, x_new, None, float("nan"), 0.0, 0.0, probs)
        active &= probs.argmax(axis=1) == clean_pred
        if not active.any():
            break
    return trace


def run_attack(model: Model, x: np.ndarray, labels: np.ndarray,
               cfg: AttackConfig) -> AttackTrace:
    """Dispatch on cfg.method."""
    cfg.validate()
    if cfg.method == "fgsm":
        return run_fgsm(model, x, labels, cfg.epsilon)
    if cfg.method in ("dev", "pgd"):
        return run_iterative_dev(model, x, labels, cfg)
    if cfg.method == "smia":
        return run_smia(model, x, labels, cfg)
    return run_deepfool(model, x, cfg, labels=labels)


def traces_equal(a: AttackTrace, b: AttackTrace, upto: int | None = None) -> bool:
    """Bit-exact equality of the x_adv / eta / step sequences."""
    ta = a.x_adv if upto is None else a.x_adv[:upto]
    tb = b.x_adv if upto is None else b.x_adv[:upto]
    if len(ta) != len(tb):
        return False
    for xa, xb, ea, eb, sa, sb in zip(ta, tb, a.eta, b.eta, a.steps, b.steps):
        if not (np.array_equal(xa, xb) and np.array_equal(ea, eb)
                and np.array_equal(sa, sb)):
            return False
    return True

"""Evaluation metrics: accuracy, false-positive rate, Jaccard index,
perturbation variance, and step-direction cosine statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attacks import AttackTrace


@dataclass
class MetricsReport:
    method: str
    clean_acc: float
    adv_acc: float
    fpr: float | None = None
    jaccard: float | None = None
    var: float | None = None
    cos_pos_frac: float | None = None

    @property
    def drop(self) -> float:
        return self.clean_acc - self.adv_acc


def classification_metrics(pred_labels, gt_labels, positive_set=None) -> dict:
    """Accuracy, plus FPR under binarization into `positive_set` vs rest."""
    pred = np.asarray(pred_labels).ravel()
    gt = np.asarray(gt_labels).ravel()
    if pred.size == 0:
        raise ValueError("empty label arrays")
    if pred.shape != gt.shape:
        raise ValueError("prediction/ground-truth length mismatch")
    out = {"accuracy": float((pred == gt).mean())}
    if positive_set is not None:
        pos = np.isin(gt, list(positive_set))
        pred_pos = np.isin(pred, list(positive_set))
        negatives = ~pos
        if negatives.any():
            out["fpr"] = float((pred_pos & negatives).sum() / negatives.sum())
        else:
            out["fpr"] = 0.0
    return out


def jaccard_index(pred_mask, gt_mask, foreground=1) -> float:
    """|A & B| / |A | B| over class-`foreground` pixel sets; 1.0 when both
    sets are empty."""
    a = np.asarray(pred_mask) == foreground
    b = np.asarray(gt_mask) == foreground
    if a.shape != b.shape:
        raise ValueError("mask shape mismatch")
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def perturbation_variance(eta) -> float:
    """Population variance of all elements of one perturbation field."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.size == 0:
        raise ValueError("empty perturbation field")
    return float(eta.var())


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); 0 by convention when either norm is < 1e-12."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("length mismatch")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def step_cosines(trace: AttackTrace) -> np.ndarray:
    """Cosine of every consecutive per-image step pair; shape
    (num_images, T-1)."""
    if len(trace.steps) < 2:
        raise ValueError("trace needs at least 2 iterations")
    n = trace.steps[0].shape[0]
    t = len(trace.steps)
    out = np.empty((n, t - 1))
    for i in range(n):
        for j in range(t - 1):
            out[i, j] = cosine_similarity(trace.steps[j][i], trace.steps[j + 1][i])
    return out


def positive_cosine_fraction(traces) -> float:
    """Fraction of consecutive step pairs, over all images in all traces,
    with strictly positive cosine similarity."""
    cosines = [step_cosines(tr).ravel() for tr in traces]
    allc = np.concatenate(cosines)
    return float((allc > 0).mean())


def mean_perturbation_variance(traces) -> float:
    """Per-image final-perturbation variance, averaged over all images."""
    vals = []
    for tr in traces:
        for i in range(tr.final_eta.shape[0]):
            vals.append(perturbation_variance(tr.final_eta[i]))
    return float(np.mean(vals))


def mean_jaccard(pred_masks, gt_masks, foreground=1) -> float:
    return float(np.mean([jaccard_index(p, g, foreground)
                          for p, g in zip(pred_masks, gt_masks)]))

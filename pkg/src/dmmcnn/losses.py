"""MSE losses for landmark regression and attribute classification, and the
weighted joint objective that combines them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _pair(pred, truth, what):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"{what}: prediction shape {pred.shape} != target shape {truth.shape}")
    if pred.ndim != 2 or pred.shape[0] < 1:
        raise ValueError(f"{what}: expected a non-empty (N, D) matrix, got {pred.shape}")
    return pred, truth


def check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if not np.all((labels == 1.0) | (labels == -1.0)):
        raise ValueError("attribute labels must be +1 or -1")
    return labels


def fld_loss(pred, truth) -> float:
    """Mean over samples of the squared L2 distance between landmark vectors."""
    pred, truth = _pair(pred, truth, "fld_loss")
    return float(np.sum((pred - truth) ** 2) / pred.shape[0])


def fld_loss_grad(pred, truth) -> np.ndarray:
    pred, truth = _pair(pred, truth, "fld_loss")
    return 2.0 * (pred - truth) / pred.shape[0]


def fac_loss_per_attribute(pred, labels) -> np.ndarray:
    """Per-attribute MSE against +/-1 labels, shape ``(J,)``."""
    pred, labels = _pair(pred, labels, "fac_loss")
    labels = check_labels(labels)
    return np.mean((pred - labels) ** 2, axis=0)


def fac_loss_grad(pred, labels, weights=None) -> np.ndarray:
    """Gradient of ``sum_j w_j * L_j`` w.r.t. the ``(N, J)`` predictions."""
    pred, labels = _pair(pred, labels, "fac_loss")
    g = 2.0 * (pred - labels) / pred.shape[0]
    if weights is not None:
        g = g * np.asarray(weights, dtype=np.float64)
    return g


def joint_loss(fac_losses, weights, fld: float, beta: float) -> float:
    """``sum_j weights[j] * fac_losses[j] + beta * fld``."""
    fac_losses = np.asarray(fac_losses, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != fac_losses.shape:
        raise ValueError(f"weights shape {weights.shape} != losses shape {fac_losses.shape}")
    if np.any(weights < 0) or beta < 0:
        raise ValueError("loss weights and beta must be non-negative")
    return float(weights @ fac_losses + beta * fld)


@dataclass
class LossReport:
    fac_losses: np.ndarray
    fld_loss: float
    joint: float
    beta: float


def joint_loss_and_grads(scores, labels, landmark_pred, landmark_true, weights, beta):
    """Evaluate the joint objective on a minibatch.

    Returns ``(report, grad_scores, grad_landmarks)``.  When ``landmark_pred``
    is None the landmark term is dropped entirely and ``grad_landmarks`` is None.
    """
    fac = fac_loss_per_attribute(scores, labels)
    if landmark_pred is None:
        fld, g_marks = 0.0, None
    else:
        fld = fld_loss(landmark_pred, landmark_true)
        g_marks = beta * fld_loss_grad(landmark_pred, landmark_true)
    total = joint_loss(fac, weights, fld, beta)
    g_scores = fac_loss_grad(scores, labels, weights)
    return LossReport(fac, fld, total, beta), g_scores, g_marks

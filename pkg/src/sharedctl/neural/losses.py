"""Scalar losses returning (value, gradient-w.r.t.-prediction)."""

from __future__ import annotations

import numpy as np


def mse_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray | None = None):
    """Mean squared error over all (optionally masked) elements.

    A mask of lower rank than pred masks whole samples along the leading
    axes; masked-out elements contribute neither to the mean nor to the
    gradient. An all-masked batch yields loss 0.
    """
    diff = pred - target
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.ndim < pred.ndim:
            mask = mask.reshape(mask.shape + (1,) * (pred.ndim - mask.ndim))
        mask = np.broadcast_to(mask, pred.shape)
        diff = diff * mask
        n = mask.sum()
        if n == 0:
            return 0.0, np.zeros_like(pred)
    else:
        n = pred.size
    loss = float((diff * diff).sum() / n)
    return loss, 2.0 * diff / n


def cross_entropy_map(prob: np.ndarray, target: np.ndarray):
    """Cross-entropy between predicted and target maps, mean over samples.

    prob and target are (N, ...) with each sample's map summing to 1.
    Returns the gradient with respect to the predicted probabilities;
    composed with the map-softmax backward this yields (prob - target)/N.
    """
    n = prob.shape[0]
    safe = np.maximum(prob, 1e-300)
    loss = float(-(target * np.log(safe)).sum() / n)
    grad = -(target / safe) / n
    return loss, grad

"""Classifier cross-entropy and the guidance losses with their angle-spread terms."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateBatch, NonFiniteLoss

VARIANTS = ("ours", "fixed_phi", "ce_only", "neg_var")
STD_FLOOR = 1e-8


def _labels_to_onehot(labels, k):
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(float)
    onehot = np.zeros((labels.shape[0], k))
    onehot[np.arange(labels.shape[0]), labels.astype(int)] = 1.0
    return onehot


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_classifier(logits, labels):
    """Mean categorical cross-entropy over a softmax and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits, dtype=float)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteLoss("non-finite logits")
    n, k = logits.shape
    y = _labels_to_onehot(labels, k)
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(np.sum(y * log_p)) / n
    return loss, (np.exp(log_p) - y) / n


def loss_guidance(l_c: float, angles, variant: str = "ours"):
    """Guidance-network loss and the extra gradient it puts on the raw angles.

    ``ours`` adds the population std of the (unwrapped) angles in the batch,
    ``neg_var`` subtracts it, ``ce_only`` and ``fixed_phi`` add nothing.
    """
    a = np.asarray(angles, dtype=float).ravel()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant in ("ce_only", "fixed_phi"):
        return float(l_c), np.zeros_like(a)
    if a.size < 2:
        raise DegenerateBatch(f"variance term needs a batch of >= 2, got {a.size}")
    sign = 1.0 if variant == "ours" else -1.0
    # centring on the first element keeps identical angles exactly at zero deviation
    d = a - a[0]
    dev = d - d.mean()
    std = float(np.sqrt(np.mean(dev**2)))
    grad = sign * dev / (a.size * max(std, STD_FLOOR))
    return float(l_c) + sign * std, grad

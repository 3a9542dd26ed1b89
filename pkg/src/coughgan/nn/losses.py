"""Cross-entropy losses. Each returns ``(loss, grad)``."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

CLIP = 1e-7


def bce_loss(p, y):
    """Mean binary cross-entropy and its gradient w.r.t. the probabilities."""
    p = np.asarray(p)
    y = np.asarray(y, dtype=p.dtype)
    if p.shape != y.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {y.shape}")
    pc = np.clip(p, CLIP, 1 - CLIP)
    loss = -np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    grad = (pc - y) / (pc * (1 - pc)) / p.size
    return float(loss), grad


def sigmoid_bce_grad(p, y):
    """Gradient of the mean BCE w.r.t. the logits that produced ``p``."""
    p = np.asarray(p)
    return (p - np.asarray(y, dtype=p.dtype).reshape(p.shape)) / p.size


def _check_labels(probs, labels):
    labels = np.asarray(labels).reshape(-1).astype(np.int64)
    if probs.ndim != 2 or probs.shape[0] != labels.size:
        raise ShapeError(f"probabilities {probs.shape} do not match {labels.size} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ShapeError(f"labels must lie in [0, {probs.shape[1]})")
    return labels


def scce_loss(probs, labels):
    """Mean sparse categorical cross-entropy and its gradient w.r.t. ``probs``."""
    probs = np.asarray(probs)
    labels = _check_labels(probs, labels)
    rows = np.arange(labels.size)
    pc = np.clip(probs[rows, labels], CLIP, 1 - CLIP)
    grad = np.zeros_like(probs)
    grad[rows, labels] = -1.0 / (pc * labels.size)
    return float(-np.mean(np.log(pc))), grad


def softmax_scce_grad(probs, labels):
    """Gradient w.r.t. the pre-softmax logits: ``(p - onehot) / B``."""
    probs = np.asarray(probs)
    labels = _check_labels(probs, labels)
    grad = probs.copy()
    grad[np.arange(labels.size), labels] -= 1
    return grad / labels.size


def binary_accuracy(p, y) -> float:
    return float(np.mean((np.asarray(p).reshape(-1) > 0.5) == (np.asarray(y).reshape(-1) > 0.5)))


def class_accuracy(probs, labels) -> float:
    return float(np.mean(np.argmax(probs, axis=-1) == np.asarray(labels).reshape(-1)))

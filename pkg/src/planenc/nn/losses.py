"""Scalar losses over Tensor graphs."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def mse(pred: Tensor, target: np.ndarray | Tensor) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target)
    diff = pred - target
    return (diff * diff).mean()


def mae(pred: Tensor, target: np.ndarray | Tensor) -> Tensor:
    target = target if isinstance(target, Tensor) else Tensor(target)
    diff = pred - target
    return ((diff * diff) ** 0.5).mean()


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over integer class labels."""
    labels = np.asarray(labels, dtype=np.intp)
    logp = logits.log_softmax(axis=-1)
    rows = np.arange(labels.shape[0])
    return -(logp[rows, labels].mean())


def nll_from_probs(probs: Tensor, labels: np.ndarray, eps: float = 1e-12) -> Tensor:
    """Mean -log p[label] for probabilities produced outside a softmax op."""
    labels = np.asarray(labels, dtype=np.intp)
    rows = np.arange(labels.shape[0])
    return -((probs[rows, labels] + eps).log().mean())

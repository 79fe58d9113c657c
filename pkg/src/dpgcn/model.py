"""Two-layer graph convolutional network with hand-written backprop.

Forward: Z0 = A X W0, H1 = dropout(relu(Z0)), logits = A H1 W1, where A is
the normalized adjacency. No biases; softmax lives inside the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import NormalizedAdjacency, spmm
from .rng import Prng


@dataclass
class GcnParams:
    w0: np.ndarray  # (feature_dim, hidden)
    w1: np.ndarray  # (hidden, num_classes)

    @property
    def size(self) -> int:
        return self.w0.size + self.w1.size

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w0.ravel(), self.w1.ravel()])

    def copy(self) -> "GcnParams":
        return GcnParams(self.w0.copy(), self.w1.copy())

    def add_flat(self, delta: np.ndarray) -> None:
        """In-place update from a flat vector laid out as (w0, w1)."""
        k = self.w0.size
        self.w0 += delta[:k].reshape(self.w0.shape)
        self.w1 += delta[k:].reshape(self.w1.shape)


@dataclass
class ForwardTrace:
    pre_hidden: np.ndarray  # Z0, before relu
    hidden: np.ndarray      # H1 after relu and dropout scaling
    logits: np.ndarray
    keep_scale: np.ndarray  # dropout mask scaled by 1/(1-p); ones in eval


@dataclass
class Metrics:
    micro_f1: float
    confusion: np.ndarray  # (K, K), rows = true class, cols = predicted
    errors: np.ndarray     # global ids of misclassified masked nodes


def init_params(feature_dim: int, hidden: int, num_classes: int,
                rng: Prng) -> GcnParams:
    """Glorot-uniform weights, bound sqrt(6 / (fan_in + fan_out))."""
    if min(feature_dim, hidden, num_classes) < 1:
        raise ValueError("zero-sized layer")

    def glorot(fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform((fan_in, fan_out)) * (2.0 * bound) - bound

    return GcnParams(glorot(feature_dim, hidden), glorot(hidden, num_classes))


def forward(params: GcnParams, adj: NormalizedAdjacency, features: np.ndarray,
            dropout: float = 0.0, training: bool = False,
            rng: Prng | None = None) -> ForwardTrace:
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    z0 = spmm(adj, features) @ params.w0
    h = np.maximum(z0, 0.0)
    if training and dropout > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        keep_scale = (rng.uniform(h.shape) >= dropout) / (1.0 - dropout)
    else:
        keep_scale = np.ones_like(h)
    h = h * keep_scale
    logits = spmm(adj, h) @ params.w1
    return ForwardTrace(z0, h, logits, keep_scale)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def masked_cross_entropy(logits: np.ndarray, labels: np.ndarray,
                         mask) -> float:
    """Mean negative log-likelihood over the masked nodes."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    y = np.asarray(labels)[mask]
    if y.min() < 0 or y.max() >= logits.shape[1]:
        raise ValueError("label out of range on a masked node")
    lp = _log_softmax(logits[mask])
    return float(-lp[np.arange(mask.size), y].mean())


def backward(params: GcnParams, trace: ForwardTrace, adj: NormalizedAdjacency,
             features: np.ndarray, labels: np.ndarray, mask) -> np.ndarray:
    """Flat gradient (w0 then w1) of the masked loss at the traced point."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    n, k = trace.logits.shape
    p = np.exp(_log_softmax(trace.logits[mask]))
    p[np.arange(mask.size), np.asarray(labels)[mask]] -= 1.0
    g1 = np.zeros((n, k))
    g1[mask] = p / mask.size
    ag1 = spmm(adj, g1)  # A is symmetric, so this is A^T g1
    grad_w1 = trace.hidden.T @ ag1
    g0 = (ag1 @ params.w1.T) * trace.keep_scale * (trace.pre_hidden > 0.0)
    grad_w0 = np.asarray(features, dtype=np.float64).T @ spmm(adj, g0)
    return np.concatenate([grad_w0.ravel(), grad_w1.ravel()])


def evaluate(params: GcnParams, adj: NormalizedAdjacency, features: np.ndarray,
             labels: np.ndarray, mask) -> Metrics:
    """Micro-F1, confusion matrix, and error set on the masked nodes."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    trace = forward(params, adj, features)
    pred = trace.logits[mask].argmax(axis=1)  # ties resolve to lowest index
    true = np.asarray(labels)[mask]
    k = trace.logits.shape[1]
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    hits = pred == true
    return Metrics(float(hits.mean()), confusion, mask[~hits])


def macro_f1(confusion: np.ndarray) -> float:
    """Unweighted mean of per-class F1; absent classes count as zero."""
    tp = np.diag(confusion).astype(np.float64)
    denom = confusion.sum(axis=0) + confusion.sum(axis=1)  # 2tp + fp + fn
    f1 = np.divide(2.0 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())

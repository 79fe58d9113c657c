"""Per-example clipping, lot-level Gaussian noising, and optimizer steps.

One lot update: clip each example gradient to norm C, sum, add a single
N(0, (sigma C)^2 I) draw, divide by the lot size. Noise enters the update
before any optimizer state, so Adam's moments only ever see noised sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GcnParams
from .rng import Prng


@dataclass(frozen=True)
class DpNoiseSpec:
    clip_norm: float = 1.0
    noise_multiplier: float = 0.0  # sigma, in units of the clip norm

    def __post_init__(self):
        if self.clip_norm <= 0:
            raise ValueError("clip norm must be positive")
        if self.noise_multiplier < 0:
            raise ValueError("noise multiplier must be nonnegative")

    @property
    def noise_std(self) -> float:
        return self.noise_multiplier * self.clip_norm


def clip_gradient(grad: np.ndarray, clip_norm: float) -> np.ndarray:
    """Rescale grad to l2 norm at most clip_norm: g / max(1, |g|/C)."""
    if clip_norm <= 0:
        raise ValueError("clip norm must be positive")
    grad = np.asarray(grad, dtype=np.float64)
    if not np.isfinite(grad).all():
        raise ValueError("non-finite gradient")
    return grad / max(1.0, float(np.linalg.norm(grad)) / clip_norm)


def noisy_lot_gradient(per_example_grads, spec: DpNoiseSpec,
                       rng: Prng) -> np.ndarray:
    """Clipped, noised, averaged gradient of one lot (one noise draw)."""
    grads = list(per_example_grads)
    if not grads:
        raise ValueError("empty lot")
    dim = grads[0].size
    if any(g.size != dim for g in grads):
        raise ValueError("inconsistent gradient lengths in lot")
    total = np.zeros(dim)
    for g in grads:
        total += clip_gradient(g, spec.clip_norm)
    if spec.noise_multiplier > 0:
        total += rng.normal(dim, std=spec.noise_std)
    return total / len(grads)


def sgd_step(params: GcnParams, grad: np.ndarray, lr: float) -> None:
    """Plain in-place descent step."""
    params.add_flat(-lr * grad)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim))


def adam_step(state: AdamState, params: GcnParams, grad: np.ndarray,
              lr: float) -> None:
    """Bias-corrected Adam update, mutating state and params."""
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    params.add_flat(-lr * m_hat / (np.sqrt(v_hat) + state.eps_hat))


@dataclass(frozen=True)
class LotPlan:
    example_ids: np.ndarray
    lot_size: int
    sampling_ratio: float  # q = L / num_examples


def sample_lot(num_examples: int, lot_size: int, rng: Prng) -> LotPlan:
    """Uniform lot of lot_size distinct example ids (sorted)."""
    if not 1 <= lot_size <= num_examples:
        raise ValueError(f"lot size {lot_size} not in [1, {num_examples}]")
    ids = rng.sample_without_replacement(num_examples, lot_size)
    return LotPlan(ids, lot_size, lot_size / num_examples)

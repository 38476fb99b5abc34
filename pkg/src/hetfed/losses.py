"""Loss functions on class distributions, with gradients w.r.t. logits.

All losses take row-stochastic (batch, classes) arrays. Values are means
over the batch; gradients are taken through the softmax that produced the
prediction rows, so callers backpropagate them directly into logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError
from .nn import DTYPE, as_batch

# Floor for probabilities inside logarithms.
PROB_EPS = 1e-7
# Bounded stand-in for log(0) when a target entry is exactly zero; makes the
# reverse loss finite on one-hot targets (4*(1 - p_true) closed form).
LOG_ZERO = -4.0


@dataclass
class LossValue:
    """Scalar loss (batch mean) and its gradient w.r.t. the prediction logits."""

    value: float
    grad_wrt_logits: np.ndarray


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], num_classes), dtype=DTYPE)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def _check_pair(pred, target, op: str) -> tuple[np.ndarray, np.ndarray]:
    p = as_batch(pred, f"{op} prediction")
    g = as_batch(target, f"{op} target")
    if p.shape != g.shape:
        raise DimensionError(f"{op}: prediction {p.shape} and target {g.shape} differ")
    return p, g


def _chain_through_softmax(probs: np.ndarray, grad_probs: np.ndarray) -> np.ndarray:
    # dL/dz_k = p_k * (dL/dp_k - sum_c dL/dp_c * p_c) for p = softmax(z)
    inner = (grad_probs * probs).sum(axis=1, keepdims=True)
    return probs * (grad_probs - inner)


def cross_entropy(pred, target) -> LossValue:
    """-mean_i sum_c target*log(pred), log arguments floored at PROB_EPS."""
    p, g = _check_pair(pred, target, "cross_entropy")
    b = p.shape[0]
    clipped = np.maximum(p, PROB_EPS)
    value = float(-(g * np.log(clipped)).sum(axis=1).mean())
    # The floor freezes the log below PROB_EPS, so those coordinates carry
    # zero gradient; matches finite differences of the actual value.
    grad_p = -(g / clipped) * (p > PROB_EPS) / b
    return LossValue(value, _chain_through_softmax(p, grad_p))


def reverse_cross_entropy(pred, target) -> LossValue:
    """-mean_i sum_c pred*log(target), with log(0) := LOG_ZERO.

    For a one-hot target with true class y this is -LOG_ZERO * (1 - p_y).
    """
    p, g = _check_pair(pred, target, "reverse_cross_entropy")
    b = p.shape[0]
    log_g = np.where(g > 0.0, np.log(np.where(g > 0.0, g, 1.0)), LOG_ZERO)
    value = float(-(p * log_g).sum(axis=1).mean())
    grad_p = np.broadcast_to(-log_g / b, p.shape)
    return LossValue(value, _chain_through_softmax(p, grad_p))


def symmetric_loss(pred, target, lam: float) -> LossValue:
    """lam * cross_entropy + reverse_cross_entropy (value and gradient)."""
    if lam < 0:
        raise ConfigurationError(f"symmetric loss weight must be >= 0, got {lam}")
    ce = cross_entropy(pred, target)
    rce = reverse_cross_entropy(pred, target)
    return LossValue(
        lam * ce.value + rce.value,
        lam * ce.grad_wrt_logits + rce.grad_wrt_logits,
    )


def kl_divergence(d1, d2) -> float:
    """mean over rows of sum d1*log(d1/d2); d2 floored at PROB_EPS in the ratio.

    Zero entries of d1 contribute 0 (the 0*log0 convention). Non-negative up
    to clamp-induced slack; zero iff the rows agree.
    """
    a, b = _check_pair(d1, d2, "kl_divergence")
    log_a = np.where(a > 0.0, np.log(np.where(a > 0.0, a, 1.0)), 0.0)
    log_b = np.log(np.maximum(b, PROB_EPS))
    per_row = np.where(a > 0.0, a * (log_a - log_b), 0.0).sum(axis=1)
    return float(per_row.mean())


def peer_learning_loss(own, peers) -> LossValue:
    """Sum over peers of KL(peer || own), with the gradient w.r.t. own logits.

    Peer distributions are constants: the caller does not own their
    parameters, so nothing flows back into them.
    """
    if not peers:
        raise ConfigurationError("peer_learning_loss needs at least one peer distribution")
    p = as_batch(own, "peer_learning_loss own")
    b = p.shape[0]
    active = p > PROB_EPS
    all_active = active.all(axis=1, keepdims=True)
    value = 0.0
    grad_z = np.zeros_like(p)
    for q in peers:
        value += kl_divergence(q, p)
        q = as_batch(q, "peer distribution")
        # d/dz of KL(q || softmax(z)) is p * sum(q_active) - q_active per row.
        # On rows with no clamping that sum is 1 by the simplex invariant;
        # using the exact constant keeps aligned peers a bitwise fixed point
        # instead of leaking simplex rounding dust into the optimizer.
        qa = q * active
        mass = np.where(all_active, 1.0, qa.sum(axis=1, keepdims=True))
        grad_z += p * mass - qa
    return LossValue(float(value), grad_z / b)

"""Training objectives on a batch of logits.

All four losses compose a softmax with a cross-entropy and reduce by the
arithmetic mean. Returned `d_logits` are gradients of that mean, so they can be
passed straight to `nn.backward`.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from nn import softmax
from transition import RevisionDelta, TransitionMatrix

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class LossError(ValueError):
    """Bad labels or a degenerate importance-weight denominator."""


@dataclass(eq=False)
class LossOutput:
    value: float
    d_logits: np.ndarray
    d_delta_t: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None


def _check(logits, labels, size: Optional[int] = None):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise LossError(f"logits must be a batch (n x C), got shape {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise LossError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise LossError("empty batch")
    if np.any(labels < 0) or np.any(labels >= c):
        raise LossError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    if size is not None and size != c:
        raise LossError(f"transition matrix is {size}x{size} but logits have {c} classes")
    return logits, labels.astype(np.int64), n, c


def _per_sample_ce(p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return -np.log(np.maximum(p[np.arange(len(labels)), labels], PROB_FLOOR))


def _ce_grad(p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    g = p.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g


def cross_entropy(logits, labels) -> LossOutput:
    logits, labels, n, _ = _check(logits, labels)
    p = softmax(logits)
    per_sample = _per_sample_ce(p, labels)
    return LossOutput(value=float(per_sample.mean()), d_logits=_ce_grad(p, labels) / n)


def forward_corrected_loss(logits, noisy_labels, T: TransitionMatrix) -> LossOutput:
    """Mean of -log q[y~] with q = T^T softmax(logits)."""
    logits, labels, n, c = _check(logits, noisy_labels, T.size)
    if np.array_equal(T.entries, np.eye(c)):
        # exact reduction, keeps identity-T training bitwise equal to the baseline
        return cross_entropy(logits, labels)
    p = softmax(logits)
    q = p @ T.entries
    rows = np.arange(n)
    q_obs = np.maximum(q[rows, labels], PROB_FLOOR)
    value = float(np.mean(-np.log(q_obs)))
    # dL/dp_j = -T[j, y~] / q[y~]; then through the softmax Jacobian
    d_p = -T.entries[:, labels].T / q_obs[:, None]
    d_logits = p * (d_p - np.sum(p * d_p, axis=1, keepdims=True))
    return LossOutput(value=value, d_logits=d_logits / n)


def importance_weights(p: np.ndarray, labels: np.ndarray, matrix: np.ndarray) -> tuple:
    """beta = g[y~] / (M^T g)[y~] and its denominator, per sample."""
    rows = np.arange(len(labels))
    denom = (p @ matrix)[rows, labels]
    small = np.flatnonzero(denom < PROB_FLOOR)
    if small.size:
        raise LossError(
            f"degenerate importance-weight denominator {denom[small[0]]:.3g} at sample {small[0]}"
        )
    return p[rows, labels] / denom, denom


def reweighted_loss(logits, noisy_labels, T: TransitionMatrix, weights=None) -> LossOutput:
    """Importance-reweighted cross-entropy; beta is held constant for the gradient.

    Pass `weights` to evaluate the objective with a fixed beta instead of the
    one implied by the current logits.
    """
    logits, labels, n, _ = _check(logits, noisy_labels, T.size)
    p = softmax(logits)
    if weights is None:
        beta, _ = importance_weights(p, labels, T.entries)
    else:
        beta = np.asarray(weights, dtype=np.float64)
    per_sample = _per_sample_ce(p, labels)
    value = float(np.mean(beta * per_sample))
    d_logits = beta[:, None] * _ce_grad(p, labels) / n
    return LossOutput(value=value, d_logits=d_logits, weights=beta)


def revision_loss(logits, noisy_labels, T: TransitionMatrix, dT: RevisionDelta,
                  weights=None) -> LossOutput:
    """Reweighted cross-entropy against T + dT, with the gradient for dT.

    beta stays detached from the network parameters but depends on dT through
    its denominator, so d_delta_t carries d(value)/d(dT). With fixed `weights`
    the value no longer depends on dT and d_delta_t is zero.
    """
    logits, labels, n, c = _check(logits, noisy_labels, T.size)
    if dT.size != T.size:
        raise LossError(f"delta is {dT.size}x{dT.size}, matrix is {T.size}x{T.size}")
    if not np.all(np.isfinite(dT.entries)):
        raise LossError("revision delta has non-finite entries")
    revised = T.entries + dT.entries
    p = softmax(logits)
    per_sample = _per_sample_ce(p, labels)
    if weights is None:
        beta, denom = importance_weights(p, labels, revised)
        # d beta / d revised[j, y~] = -beta / denom * p_j
        coef = -(beta / denom) * per_sample / n
        d_delta = np.zeros((c, c))
        np.add.at(d_delta.T, labels, coef[:, None] * p)
    else:
        beta = np.asarray(weights, dtype=np.float64)
        d_delta = np.zeros((c, c))
    value = float(np.mean(beta * per_sample))
    d_logits = beta[:, None] * _ce_grad(p, labels) / n
    return LossOutput(value=value, d_logits=d_logits, d_delta_t=d_delta, weights=beta)


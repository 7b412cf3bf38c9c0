"""Ranking losses on raw similarity scores, plain numpy.

These are the reference implementations the graph-built training losses are
tested against; they share no code with the graph ops.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def mil_nce_loss(pos: np.ndarray, neg: np.ndarray) -> float:
    """Multiple-positive contrastive loss for one bag.

    log-sum-exp over positives and negatives together, minus log-sum-exp
    over the positives alone. Shift-invariant; zero negatives would make it
    degenerate, so at least one of each is required.
    """
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    return float(logsumexp(np.concatenate([pos, neg])) - logsumexp(pos))


def mil_nce_batch(pairs) -> float:
    """Mean of mil_nce_loss over (pos, neg) pairs."""
    if not pairs:
        raise ValueError("empty batch")
    return float(np.mean([mil_nce_loss(p, n) for p, n in pairs]))


def _hinge(scores: np.ndarray, margin: float) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if scores.shape != (n, n):
        raise ValueError(f"need a square score matrix, got {scores.shape}")
    h = np.maximum(0.0, margin + scores - np.diagonal(scores)[None, :])
    np.fill_diagonal(h, 0.0)
    return h


def vse_loss(scores: np.ndarray, margin: float = 0.0) -> float:
    """Sum of margin violations against each text's true clip.

    scores[i, j] is clip i against text j; the diagonal holds true pairs
    and is excluded from the sum.
    """
    return float(_hinge(scores, margin).sum())


def vsepp_loss(scores: np.ndarray, margin: float = 0.0) -> float:
    """Like vse_loss but keeps only the hardest violation per text."""
    return float(_hinge(scores, margin).max(axis=0).sum())

"""Neighbor-similarity prior over a shot sequence.

Each feature row is scaled by the mean clamped cosine between itself and
its immediate neighbors, so rows that fit their temporal context keep
their magnitude while out-of-place rows shrink toward zero.
"""

from __future__ import annotations

import numpy as np

from ..numkit import graph as G

_NORM_EPS = 1e-12


def _cos_clamped(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= _NORM_EPS or nb <= _NORM_EPS:
        return 0.0
    return max(0.0, float(a @ b) / float(na * nb))


def prior_scales(x: np.ndarray) -> np.ndarray:
    """Per-row multipliers: mean clamped cosine with existing neighbors.

    A single-row sequence gets scale 1.
    """
    k = x.shape[0]
    if k == 0:
        raise ValueError("empty sequence")
    if k == 1:
        return np.ones(1, dtype=x.dtype)
    c = np.array([_cos_clamped(x[i], x[i + 1]) for i in range(k - 1)])
    s = np.empty(k, dtype=np.float64)
    s[0] = c[0]
    s[-1] = c[-1]
    for i in range(1, k - 1):
        s[i] = 0.5 * (c[i - 1] + c[i])
    return s.astype(x.dtype)


def temporal_prior(x: np.ndarray) -> np.ndarray:
    """(K, d) -> (K, d): rows scaled by their neighbor-similarity."""
    return x * prior_scales(x)[:, None]


def _averaging_matrix(batch: int, k: int, dtype) -> np.ndarray:
    """Maps the (batch*(k-1),) neighbor cosines to (batch*k,) row scales."""
    a = np.zeros((batch * k, batch * (k - 1)), dtype=dtype)
    for b in range(batch):
        r0, c0 = b * k, b * (k - 1)
        a[r0, c0] = 1.0
        a[r0 + k - 1, c0 + k - 2] = 1.0
        for i in range(1, k - 1):
            a[r0 + i, c0 + i - 1] = 0.5
            a[r0 + i, c0 + i] = 0.5
    return a


def temporal_prior_graph(x: G.Node, batch: int, k: int) -> G.Node:
    """Graph twin of temporal_prior for a (batch*k, d) stacked node.

    Rows are grouped per sample: sample b owns rows b*k..(b+1)*k-1. k must
    be >= 2; length-1 sequences skip the prior entirely.
    """
    if k < 2:
        raise ValueError("graph prior needs sequences of >= 2 rows")
    if x.value.shape[0] != batch * k:
        raise ValueError(f"expected {batch * k} rows, got {x.value.shape[0]}")
    left = [b * k + i for b in range(batch) for i in range(k - 1)]
    right = [r + 1 for r in left]
    cos = G.rowwise_cos_clamped(G.gather_rows(x, left), G.gather_rows(x, right))
    scales = G.matmul(G.const(_averaging_matrix(batch, k, x.value.dtype)), cos)
    return G.mul(scales, x)

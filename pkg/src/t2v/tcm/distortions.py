"""Sequence distortions for the coherence pretext task.

A training sample is a short run of consecutive shots. One of the enabled
distortions is applied and the classifier must recover which one:

- unchanged: identity.
- replacement: k shots are swapped for random shots of other videos (both
  the visual feature and the histogram move).
- jitter: k shots keep their visual feature but their color histogram is
  reshuffled (channel blocks permuted, bins stretched, renormalized).

k is uniform on 1..floor(K/2), so at most half of a sequence is touched.
"""

from __future__ import annotations

import enum
import itertools

import numpy as np


class DistortionKind(enum.Enum):
    UNCHANGED = "unchanged"
    REPLACEMENT = "replacement"
    JITTER = "jitter"


_OPTIONAL = (DistortionKind.REPLACEMENT, DistortionKind.JITTER)

JITTER_SCALE_LO = 0.6
JITTER_SCALE_HI = 1.4

# the 5 non-identity permutations of three channel blocks
_NON_IDENTITY_PERMS = tuple(p for p in itertools.permutations(range(3))
                            if p != (0, 1, 2))


def enabled_kinds(names) -> tuple[DistortionKind, ...]:
    """("replacement",) or ("replacement", "jitter") -> full label tuple.

    UNCHANGED is always class 0; the class count C is 2 or 3.
    """
    picked = []
    for n in names:
        kind = DistortionKind(n)
        if kind is DistortionKind.UNCHANGED:
            raise ValueError("'unchanged' is always enabled; list only the "
                             "distortions to add")
        if kind in picked:
            raise ValueError(f"duplicate distortion {n!r}")
        picked.append(kind)
    if not picked:
        raise ValueError("need at least one distortion besides 'unchanged'")
    ordered = tuple(k for k in _OPTIONAL if k in picked)
    return (DistortionKind.UNCHANGED,) + ordered


def sample_distortion(rng: np.random.Generator,
                      kinds: tuple[DistortionKind, ...],
                      probs=None) -> DistortionKind:
    """Categorical draw over the enabled kinds, uniform by default.

    probs, when given, must be one non-negative weight per kind summing
    to 1.
    """
    if not kinds:
        raise ValueError("no distortion kinds to sample from")
    if probs is None:
        probs = np.full(len(kinds), 1.0 / len(kinds))
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(kinds),):
        raise ValueError(f"need {len(kinds)} probabilities, got {probs.shape}")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    return kinds[int(rng.choice(len(kinds), p=probs))]


def sample_k(rng: np.random.Generator, n_shots: int) -> int:
    """Uniform 1..floor(K/2); sequences must have at least two shots."""
    if n_shots < 2:
        raise ValueError(f"cannot distort a sequence of {n_shots} shot(s)")
    return int(rng.integers(1, n_shots // 2 + 1))


def _reflect(p: float, n: int) -> float:
    """Mirror a float position into [0, n-1] (reflect padding)."""
    if n == 1:
        return 0.0
    period = 2.0 * (n - 1)
    p = abs(p) % period
    return period - p if p > n - 1 else p


def _stretch_block(block: np.ndarray, scale: float) -> np.ndarray:
    """Resample one channel block about its center, then renormalize.

    Output bin i reads the input at (i - c)/scale + c with c the block
    center, linearly interpolated with reflected edges.
    """
    n = block.shape[0]
    c = (n - 1) / 2.0
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        p = _reflect((i - c) / scale + c, n)
        lo = int(np.floor(p))
        hi = min(lo + 1, n - 1)
        w = p - lo
        out[i] = (1.0 - w) * block[lo] + w * block[hi]
    s = out.sum()
    if s <= 0:
        raise ValueError("degenerate histogram block after stretching")
    return (out / s).astype(block.dtype)


def jitter_histogram(rng: np.random.Generator, hist: np.ndarray) -> np.ndarray:
    """Permute the three channel blocks (never identity) and stretch each."""
    d = hist.shape[0]
    if d % 3 != 0:
        raise ValueError(f"histogram length {d} is not 3 channel blocks")
    nb = d // 3
    perm = _NON_IDENTITY_PERMS[int(rng.integers(len(_NON_IDENTITY_PERMS)))]
    blocks = [hist[ch * nb:(ch + 1) * nb] for ch in perm]
    out = np.concatenate([
        _stretch_block(b, float(rng.uniform(JITTER_SCALE_LO, JITTER_SCALE_HI)))
        for b in blocks])
    return out.astype(hist.dtype)


def apply_distortion(rng: np.random.Generator, kind: DistortionKind,
                     vis: np.ndarray, hist: np.ndarray,
                     donor_vis: np.ndarray | None = None,
                     donor_hist: np.ndarray | None = None):
    """Apply one distortion to a (K, d_v)/(K, d_h) pair.

    Returns (vis2, hist2, positions); positions is the sorted tuple of
    modified indices (empty for UNCHANGED). Replacement needs donor banks:
    rows sampled from them stand in for the replaced shots, and the caller
    is responsible for excluding the sequence's own video from the pool.
    """
    if vis.shape[0] != hist.shape[0]:
        raise ValueError(f"stream lengths differ: {vis.shape[0]} != {hist.shape[0]}")
    if kind is DistortionKind.UNCHANGED:
        return vis, hist, ()

    k = sample_k(rng, vis.shape[0])
    positions = np.sort(rng.choice(vis.shape[0], size=k, replace=False))
    vis2, hist2 = vis.copy(), hist.copy()
    if kind is DistortionKind.REPLACEMENT:
        if donor_vis is None or donor_hist is None or len(donor_vis) == 0:
            raise ValueError("replacement needs a non-empty donor pool")
        rows = rng.choice(len(donor_vis), size=k, replace=False)
        vis2[positions] = donor_vis[rows]
        hist2[positions] = donor_hist[rows]
    elif kind is DistortionKind.JITTER:
        for p in positions:
            hist2[p] = jitter_histogram(rng, hist[p])
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown distortion {kind}")
    return vis2, hist2, tuple(int(p) for p in positions)

"""Finite-difference gradients, the independent check against grad()."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamSet


def _with_entry(params: ParamSet, name: str, value: np.ndarray) -> ParamSet:
    out = ParamSet(version=params.version)
    for k, v in params.items():
        out[k] = value if k == name else v
    return out


def finite_diff_grad(f: Callable[[ParamSet], float], params: ParamSet,
                     eps: float = 1e-6) -> ParamSet:
    """Central differences of scalar f around params, one coordinate at a time.

    Run this at float64; at float32 the difference quotient drowns in
    rounding error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = ParamSet(version=params.version)
    for name, p in params.items():
        g = np.zeros(p.shape, dtype=np.float64)
        flat_g = g.reshape(-1)
        base = p.astype(np.float64)
        for i in range(p.size):
            hi = base.copy().reshape(-1)
            hi[i] += eps
            lo = base.copy().reshape(-1)
            lo[i] -= eps
            f_hi = float(f(_with_entry(params, name, hi.reshape(p.shape))))
            f_lo = float(f(_with_entry(params, name, lo.reshape(p.shape))))
            flat_g[i] = (f_hi - f_lo) / (2.0 * eps)
        out[name] = g
    return out


def max_rel_err(a: ParamSet, b: ParamSet, floor: float = 1e-4) -> float:
    """max over all coordinates of |a-b| / max(floor, |a|, |b|).

    The floor keeps near-zero coordinates meaningful: central differences at
    eps=1e-6 carry ~1e-8 of absolute rounding noise, so gradients below the
    floor are effectively compared at an absolute tolerance of tol*floor.
    """
    worst = 0.0
    names = set(a.names()) | set(b.names())
    for name in names:
        av = a.get(name)
        bv = b.get(name)
        if av is None or bv is None:
            raise KeyError(f"parameter {name!r} missing from one side")
        denom = np.maximum(floor, np.maximum(np.abs(av), np.abs(bv)))
        err = np.abs(av.astype(np.float64) - bv.astype(np.float64)) / denom
        if err.size:
            worst = max(worst, float(err.max()))
    return worst

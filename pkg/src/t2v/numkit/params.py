"""Named parameter sets and the SGD update."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

_FLOAT_DTYPES = (np.float32, np.float64)


def _freeze(name: str, value) -> np.ndarray:
    arr = np.array(value, copy=True)
    if arr.dtype == np.float64 or arr.dtype == np.float32:
        pass
    elif np.issubdtype(arr.dtype, np.integer) or arr.dtype == object:
        raise TypeError(f"parameter {name!r} must be float32/float64, got {arr.dtype}")
    else:
        arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite values in parameter {name!r}")
    arr.setflags(write=False)
    return arr


class ParamSet:
    """Ordered mapping of parameter name -> read-only float array.

    Entries are copied on insert and marked non-writeable; updates go
    through sgd_step, which returns a new ParamSet.
    """

    def __init__(self, tensors: dict | Iterable[tuple[str, np.ndarray]] | None = None,
                 version: int = 1):
        self.version = int(version)
        self._t: dict[str, np.ndarray] = {}
        if tensors is not None:
            items = tensors.items() if isinstance(tensors, dict) else tensors
            for name, value in items:
                self[name] = value

    def __setitem__(self, name: str, value) -> None:
        if not isinstance(name, str) or not name:
            raise TypeError("parameter name must be a non-empty string")
        self._t[name] = _freeze(name, value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._t[name]

    def get(self, name: str, default=None):
        return self._t.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self._t

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def names(self) -> list[str]:
        return list(self._t)

    def items(self):
        return self._t.items()

    def copy(self) -> "ParamSet":
        return ParamSet(self._t, version=self.version)

    def astype(self, dtype) -> "ParamSet":
        return ParamSet({k: v.astype(dtype) for k, v in self._t.items()},
                        version=self.version)

    def n_values(self) -> int:
        return sum(v.size for v in self._t.values())

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}:{v.shape}" for k, v in self._t.items())
        return f"ParamSet(v{self.version}, {inner})"


def sgd_step(params: ParamSet, grads: ParamSet, lr: float) -> ParamSet:
    """params - lr * grads, elementwise. Pure; missing grads leave entries unchanged."""
    if lr < 0:
        raise ValueError(f"negative learning rate {lr}")
    out = ParamSet(version=params.version)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} shape {p.shape}")
        out[name] = p - np.asarray(lr, dtype=p.dtype) * g.astype(p.dtype, copy=False)
    return out

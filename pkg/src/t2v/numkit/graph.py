"""Reverse-mode gradient graph over numpy arrays.

Each op computes its forward value eagerly and records parent nodes plus a
vector-Jacobian closure. grad() walks the graph once in reverse topological
order. Every op output is checked for NaN/Inf; a non-finite value raises
NumericError naming the offending node. Arrays follow the dtype of their
inputs (float32 for training, float64 under gradient checks).
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import expit

from .params import ParamSet

_serial = itertools.count()


class NumericError(ArithmeticError):
    """An op produced a non-finite value."""


class Node:
    __slots__ = ("value", "parents", "vjp", "name", "pname")

    def __init__(self, value, parents=(), vjp=None, name="node", pname=None):
        self.value = value
        self.parents = parents
        self.vjp = vjp          # upstream grad -> tuple of per-parent grads (or None)
        self.name = f"{name}#{next(_serial)}"
        self.pname = pname      # set on leaves bound to a ParamSet entry

    def __repr__(self):
        return f"Node({self.name}, shape={np.shape(self.value)})"


def _make(value, parents, vjp, name):
    value = np.asarray(value)
    if not np.all(np.isfinite(value)):
        raise NumericError(f"non-finite value produced by node {name!r}")
    return Node(value, parents, vjp, name)


def param(name: str, value: np.ndarray) -> Node:
    """Leaf bound to parameter `name`; grad() reports into this name."""
    return Node(np.asarray(value), name=f"param:{name}", pname=name)


def const(value) -> Node:
    return Node(np.asarray(value), name="const")


def bind(params: ParamSet) -> dict[str, Node]:
    """One param leaf per entry, keyed by name."""
    return {name: param(name, value) for name, value in params.items()}


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---- arithmetic ----

def add(a: Node, b: Node) -> Node:
    v = a.value + b.value
    return _make(v, (a, b),
                 lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
                 "add")


def sub(a: Node, b: Node) -> Node:
    v = a.value - b.value
    return _make(v, (a, b),
                 lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
                 "sub")


def mul(a: Node, b: Node) -> Node:
    v = a.value * b.value
    return _make(v, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.value.shape),
                            _unbroadcast(g * a.value, b.value.shape)),
                 "mul")


def scale(a: Node, c: float) -> Node:
    c = a.value.dtype.type(c)
    return _make(a.value * c, (a,), lambda g: (g * c,), "scale")


def neg(a: Node) -> Node:
    return scale(a, -1.0)


# ---- nonlinearities ----

def relu(a: Node) -> Node:
    v = np.maximum(a.value, 0)
    mask = a.value > 0
    return _make(v, (a,), lambda g: (g * mask,), "relu")


def tanh(a: Node) -> Node:
    v = np.tanh(a.value)
    return _make(v, (a,), lambda g: (g * (1.0 - v * v),), "tanh")


def sigmoid(a: Node) -> Node:
    v = expit(a.value)
    return _make(v, (a,), lambda g: (g * v * (1.0 - v),), "sigmoid")


# ---- linear algebra ----

def affine(x: Node, w: Node, b: Node) -> Node:
    """x (B,din) @ w (din,dout) + b (dout,) -> (B,dout)."""
    if x.value.ndim != 2 or w.value.ndim != 2:
        raise ValueError(f"affine expects 2-d x and w, got {x.value.shape}, {w.value.shape}")
    v = x.value @ w.value + b.value
    return _make(v, (x, w, b),
                 lambda g: (g @ w.value.T, x.value.T @ g, g.sum(axis=0)),
                 "affine")


def matmul(a: Node, b: Node) -> Node:
    """a (n,d) @ b (d,k)."""
    v = a.value @ b.value
    return _make(v, (a, b),
                 lambda g: (g @ b.value.T, a.value.T @ g),
                 "matmul")


def matmul_nt(a: Node, b: Node) -> Node:
    """a (n,d) @ b(m,d).T -> (n,m)."""
    v = a.value @ b.value.T
    return _make(v, (a, b),
                 lambda g: (g @ b.value, g.T @ a.value),
                 "matmul_nt")


def concat_cols(a: Node, b: Node) -> Node:
    na = a.value.shape[1]
    v = np.concatenate([a.value, b.value], axis=1)
    return _make(v, (a, b), lambda g: (g[:, :na], g[:, na:]), "concat_cols")


def slice_cols(x: Node, j0: int, j1: int) -> Node:
    def back(g):
        gx = np.zeros_like(x.value)
        gx[:, j0:j1] = g
        return (gx,)
    return _make(x.value[:, j0:j1], (x,), back, "slice_cols")


def gather_rows(x: Node, ids) -> Node:
    """Row lookup x[ids]; gradient scatter-adds into the source rows."""
    ids = np.asarray(ids, dtype=np.int64)

    def back(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, ids, g)
        return (gx,)
    return _make(x.value[ids], (x,), back, "gather_rows")


# ---- segment pooling (contiguous row ranges) ----

def _check_segments(n_rows, starts, stops):
    starts = np.asarray(starts, dtype=np.int64)
    stops = np.asarray(stops, dtype=np.int64)
    if starts.shape != stops.shape or starts.ndim != 1:
        raise ValueError("segment starts/stops must be 1-d and same length")
    if np.any(stops <= starts) or np.any(starts < 0) or np.any(stops > n_rows):
        raise ValueError("empty or out-of-range segment")
    return starts, stops


def segment_mean(x: Node, starts, stops) -> Node:
    """Per-segment column means of contiguous row ranges -> (n_segments, d)."""
    starts, stops = _check_segments(x.value.shape[0], starts, stops)
    out = np.empty((len(starts), x.value.shape[1]), dtype=x.value.dtype)
    for k in range(len(starts)):
        out[k] = x.value[starts[k]:stops[k]].mean(axis=0)

    def back(g):
        gx = np.zeros_like(x.value)
        for k in range(len(starts)):
            gx[starts[k]:stops[k]] += g[k] / (stops[k] - starts[k])
        return (gx,)
    return _make(out, (x,), back, "segment_mean")


def segment_max(x: Node, starts, stops) -> Node:
    """Per-segment column maxima; ties route the gradient to the first row."""
    starts, stops = _check_segments(x.value.shape[0], starts, stops)
    out = np.empty((len(starts), x.value.shape[1]), dtype=x.value.dtype)
    arg = np.empty_like(out, dtype=np.int64)
    for k in range(len(starts)):
        seg = x.value[starts[k]:stops[k]]
        am = seg.argmax(axis=0)
        arg[k] = starts[k] + am
        out[k] = seg[am, np.arange(seg.shape[1])]

    def back(g):
        gx = np.zeros_like(x.value)
        cols = np.arange(x.value.shape[1])
        for k in range(len(starts)):
            np.add.at(gx, (arg[k], cols), g[k])
        return (gx,)
    return _make(out, (x,), back, "segment_max")


def max_axis0(x: Node) -> Node:
    """Columnwise max of a 2-d array -> (d,); ties take the first row."""
    am = x.value.argmax(axis=0)
    cols = np.arange(x.value.shape[1])

    def back(g):
        gx = np.zeros_like(x.value)
        np.add.at(gx, (am, cols), g)
        return (gx,)
    return _make(x.value[am, cols], (x,), back, "max_axis0")


def diag_as_row(x: Node) -> Node:
    """Diagonal of a square matrix as shape (1, n)."""
    n = x.value.shape[0]
    if x.value.shape != (n, n):
        raise ValueError(f"diag_as_row expects a square matrix, got {x.value.shape}")

    def back(g):
        gx = np.zeros_like(x.value)
        np.fill_diagonal(gx, g[0])
        return (gx,)
    return _make(np.diagonal(x.value)[None, :].copy(), (x,), back, "diag_as_row")


# ---- cosine with clamp ----

_NORM_EPS = 1e-12


def rowwise_cos_clamped(a: Node, b: Node) -> Node:
    """max(0, cos(a_i, b_i)) per row -> (B, 1). Rows with a near-zero norm give 0."""
    av, bv = a.value, b.value
    na = np.linalg.norm(av, axis=1)
    nb = np.linalg.norm(bv, axis=1)
    ok = (na > _NORM_EPS) & (nb > _NORM_EPS)
    dot = np.einsum("ij,ij->i", av, bv)
    denom = np.where(ok, na * nb, 1.0)
    cos = np.where(ok, dot / denom, 0.0)
    out = np.maximum(cos, 0.0).astype(av.dtype)[:, None]

    def back(g):
        live = (ok & (cos > 0.0))[:, None]
        gr = g * live
        inv = np.where(ok, 1.0 / denom, 0.0)[:, None]
        cosc = cos[:, None]
        ga = gr * (bv * inv - cosc * av / np.where(ok, na * na, 1.0)[:, None])
        gb = gr * (av * inv - cosc * bv / np.where(ok, nb * nb, 1.0)[:, None])
        return (ga.astype(av.dtype), gb.astype(bv.dtype))
    return _make(out, (a, b), back, "rowwise_cos_clamped")


# ---- reductions and losses ----

def sum_all(x: Node) -> Node:
    v = x.value.sum()
    return _make(v, (x,), lambda g: (np.broadcast_to(g, x.value.shape).astype(x.value.dtype),),
                 "sum_all")


def mean_all(x: Node) -> Node:
    n = x.value.size
    v = x.value.mean()
    return _make(v, (x,),
                 lambda g: ((np.broadcast_to(g, x.value.shape) / n).astype(x.value.dtype),),
                 "mean_all")


def masked_logsumexp(x: Node, mask: np.ndarray) -> Node:
    """log sum exp over the True entries of `mask` (max-shifted), scalar output."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.value.shape:
        raise ValueError(f"mask shape {mask.shape} != value shape {x.value.shape}")
    if not mask.any():
        raise ValueError("masked_logsumexp over an empty mask")
    sel = x.value[mask]
    m = sel.max()
    s = np.exp(sel - m).sum()
    v = np.asarray(m + np.log(s), dtype=x.value.dtype)

    def back(g):
        gx = np.zeros_like(x.value)
        gx[mask] = np.exp(sel - m) / s
        return (gx * g,)
    return _make(v, (x,), back, "masked_logsumexp")


def softmax_cross_entropy(logits: Node, labels) -> Node:
    """Mean over rows of -log softmax(logits)[label]. labels: (B,) int."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.value
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ValueError(f"bad logits/labels shapes: {z.shape}, {labels.shape}")
    m = z.max(axis=1, keepdims=True)
    e = np.exp(z - m)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(z.shape[0])
    lse = m[:, 0] + np.log(e.sum(axis=1))
    v = np.asarray((lse - z[rows, labels]).mean(), dtype=z.dtype)

    def back(g):
        gz = p.copy()
        gz[rows, labels] -= 1.0
        return ((gz / z.shape[0]).astype(z.dtype) * g,)
    return _make(v, (logits,), back, "softmax_cross_entropy")


def add_n(nodes: list[Node]) -> Node:
    """Sum of same-shape nodes."""
    if not nodes:
        raise ValueError("add_n of no nodes")
    out = nodes[0]
    for n in nodes[1:]:
        out = add(out, n)
    return out


# ---- backward pass ----

def _topo(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        if i == 0:
            if id(node) in seen:
                continue
            seen.add(id(node))
        if i < len(node.parents):
            stack.append((node, i + 1))
            child = node.parents[i]
            if id(child) not in seen:
                stack.append((child, 0))
        else:
            order.append(node)
    return order


def grad(loss_node: Node, params: ParamSet) -> ParamSet:
    """d(loss)/d(p) for every p in params; zeros for params not on the graph."""
    if np.size(loss_node.value) != 1:
        raise ValueError(f"loss must be scalar, got shape {np.shape(loss_node.value)}")
    order = _topo(loss_node)
    adj: dict[int, np.ndarray] = {id(loss_node): np.ones_like(loss_node.value)}
    found: dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = adj.pop(id(node), None)
        if g is None:
            continue
        if node.pname is not None:
            acc = found.get(node.pname)
            found[node.pname] = g if acc is None else acc + g
        if node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None:
                continue
            cur = adj.get(id(parent))
            adj[id(parent)] = pg if cur is None else cur + pg
    out = ParamSet(version=params.version)
    for name, p in params.items():
        got = found.get(name)
        out[name] = got.reshape(p.shape) if got is not None else np.zeros_like(p)
    return out

"""Coherence classifier: two LSTM streams over prior-scaled features.

The visual features and the color histograms each pass through the
neighbor-similarity prior and a two-layer LSTM; the final hidden states of
both streams concatenate into a two-layer MLP that predicts which
distortion (if any) was applied. The probability of "unchanged" doubles as
a coherence score for re-ranking retrieved sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..numkit import ParamSet
from .distortions import DistortionKind, enabled_kinds
from .prior import temporal_prior


@dataclass(frozen=True)
class TcmConfig:
    """Sizes for the coherence model. Defaults are the small desk profile.

    Each LSTM's hidden width equals its input width, so the classifier MLP
    consumes d_v + d_h values.
    """

    d_v: int = 32
    d_h: int = 24
    mlp_hidden: int = 32
    distortions: tuple[str, ...] = ("replacement", "jitter")
    lstm_init_scale: float = 0.6

    def __post_init__(self):
        if self.d_v <= 0 or self.d_h <= 0 or self.mlp_hidden <= 0:
            raise ValueError("dims must be positive")
        if self.lstm_init_scale <= 0:
            raise ValueError("lstm_init_scale must be positive")
        enabled_kinds(self.distortions)  # validates

    @property
    def kinds(self) -> tuple[DistortionKind, ...]:
        return enabled_kinds(self.distortions)

    @property
    def n_classes(self) -> int:
        return len(self.kinds)

    @staticmethod
    def paper() -> "TcmConfig":
        """The full-scale profile from the reference configuration."""
        return TcmConfig(d_v=512, d_h=384, mlp_hidden=128)


def tcm_config_dict(cfg: TcmConfig) -> dict:
    return {"d_v": cfg.d_v, "d_h": cfg.d_h, "mlp_hidden": cfg.mlp_hidden,
            "distortions": list(cfg.distortions),
            "lstm_init_scale": cfg.lstm_init_scale}


def tcm_config_from_dict(d: dict) -> TcmConfig:
    return TcmConfig(d_v=d["d_v"], d_h=d["d_h"], mlp_hidden=d["mlp_hidden"],
                     distortions=tuple(d["distortions"]),
                     lstm_init_scale=d.get("lstm_init_scale", 0.6))


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape).astype(np.float32)


def init_tcm_params(cfg: TcmConfig, seed: int) -> ParamSet:
    """MLP weights uniform(+-1/sqrt(fan_in)); LSTM weights uniform
    (+-lstm_init_scale); biases zero.

    The LSTM scale is deliberately wider than 1/sqrt(fan_in): the inputs
    are unit-norm feature rows whose per-entry magnitude shrinks with the
    dimension, and two stacked LSTMs at 1/sqrt(fan_in) squash them to
    near-zero hidden states, starving the classifier of gradient.

    The final classifier layer starts at exactly zero so an untrained model
    emits uniform class probabilities; see score_sequence.
    """
    rng = np.random.default_rng(seed)
    s = cfg.lstm_init_scale
    p = ParamSet()
    for stream, d in (("vis", cfg.d_v), ("hist", cfg.d_h)):
        for layer in (0, 1):
            p[f"{stream}_lstm.l{layer}.w"] = rng.uniform(
                -s, s, size=(2 * d, 4 * d)).astype(np.float32)
            p[f"{stream}_lstm.l{layer}.b"] = np.zeros(4 * d, dtype=np.float32)
    d_cat = cfg.d_v + cfg.d_h
    p["mlp.w1"] = _uniform(rng, (d_cat, cfg.mlp_hidden), d_cat)
    p["mlp.b1"] = np.zeros(cfg.mlp_hidden, dtype=np.float32)
    p["mlp.w2"] = np.zeros((cfg.mlp_hidden, cfg.n_classes), dtype=np.float32)
    p["mlp.b2"] = np.zeros(cfg.n_classes, dtype=np.float32)
    return p


def lstm_forward(xs: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One LSTM layer over a (K, d_in) sequence -> (K, H) hidden states.

    The packed weight is (d_in + H, 4H) with gate order [input, forget,
    candidate, output]; h and c start at zero.
    """
    h_dim = w.shape[1] // 4
    if w.shape[0] != xs.shape[1] + h_dim:
        raise ValueError(f"weight {w.shape} does not match input "
                         f"{xs.shape[1]} + hidden {h_dim}")
    h = np.zeros(h_dim, dtype=xs.dtype)
    c = np.zeros(h_dim, dtype=xs.dtype)
    out = np.empty((xs.shape[0], h_dim), dtype=xs.dtype)
    for t in range(xs.shape[0]):
        z = np.concatenate([xs[t], h]) @ w + b
        i = expit(z[:h_dim])
        f = expit(z[h_dim:2 * h_dim])
        g = np.tanh(z[2 * h_dim:3 * h_dim])
        o = expit(z[3 * h_dim:])
        c = f * c + i * g
        h = (o * np.tanh(c)).astype(xs.dtype)
        out[t] = h
    return out


def encode_stream(params: ParamSet, stream: str, xs: np.ndarray) -> np.ndarray:
    """Prior scaling, then the two LSTM layers; returns the final hidden."""
    scaled = temporal_prior(xs)
    h0 = lstm_forward(scaled, params[f"{stream}_lstm.l0.w"],
                      params[f"{stream}_lstm.l0.b"])
    h1 = lstm_forward(h0, params[f"{stream}_lstm.l1.w"],
                      params[f"{stream}_lstm.l1.b"])
    return h1[-1]


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def score_sequence(params: ParamSet, vis: np.ndarray,
                   hist: np.ndarray) -> tuple[np.ndarray, float]:
    """(class_probs, coherence) for one shot sequence.

    coherence is the probability of the "unchanged" class. A single-shot
    sequence is coherent by convention: its probabilities are still
    computed, but the returned coherence is pinned to 1.0.
    """
    if vis.ndim != 2 or hist.ndim != 2:
        raise ValueError("vis and hist must be 2-d (K, dim) arrays")
    if vis.shape[0] != hist.shape[0]:
        raise ValueError(f"stream lengths differ: {vis.shape[0]} != "
                         f"{hist.shape[0]}")
    if vis.shape[0] == 0:
        raise ValueError("empty sequence")
    hv = encode_stream(params, "vis", vis)
    hh = encode_stream(params, "hist", hist)
    z1 = np.maximum(np.concatenate([hv, hh]) @ params["mlp.w1"]
                    + params["mlp.b1"], 0.0)
    probs = _softmax(z1 @ params["mlp.w2"] + params["mlp.b2"])
    coherence = 1.0 if vis.shape[0] == 1 else float(probs[0])
    return probs, coherence


def classify(params: ParamSet, vis: np.ndarray, hist: np.ndarray) -> int:
    """Predicted distortion label (argmax of the class probabilities)."""
    probs, _ = score_sequence(params, vis, hist)
    return int(np.argmax(probs))

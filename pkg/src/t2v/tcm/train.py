"""Training loop for the coherence classifier.

Each step crops short runs of consecutive shots out of random clips,
distorts some of them, and trains the classifier to name the distortion.
Crops of equal length are stacked into one graph; a batch mixing lengths
becomes a few stacked graphs whose losses combine sample-weighted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..datagen import ClipSample, save_checkpoint
from ..numkit import LrSchedule, ParamSet, grad, graph as G, lr_at, sgd_step
from .distortions import DistortionKind, apply_distortion, sample_distortion
from .model import TcmConfig, init_tcm_params, tcm_config_dict
from .prior import temporal_prior_graph


@dataclass(frozen=True)
class TrainTcmConfig:
    steps: int = 300
    batch_size: int = 32
    base_lr: float = 0.05
    warmup_steps: int = 10
    decay_steps: tuple[int, ...] = ()
    decay_factor: float = 0.1
    crop_max: int = 4
    seed: int = 0
    log_every: int = 25
    checkpoint_every: int = 200

    def __post_init__(self):
        if self.steps < 1 or self.batch_size < 1:
            raise ValueError("need steps >= 1 and batch_size >= 1")
        if self.crop_max < 2:
            raise ValueError("crop_max must be >= 2")
        if self.base_lr <= 0 or not 0 < self.decay_factor <= 1:
            raise ValueError("bad learning-rate settings")


def _lstm_stack_graph(P, stream: str, x: G.Node, batch: int, k: int,
                      d: int) -> G.Node:
    """Two LSTM layers over `batch` stacked length-k sequences.

    x is (batch*k, d) with sample b owning rows b*k..(b+1)*k-1; returns the
    final top-layer hidden states, (batch, d).
    """
    seq = [G.gather_rows(x, [b * k + t for b in range(batch)])
           for t in range(k)]
    zeros = np.zeros((batch, d), dtype=x.value.dtype)
    for layer in (0, 1):
        w = P[f"{stream}_lstm.l{layer}.w"]
        bias = P[f"{stream}_lstm.l{layer}.b"]
        h, c = G.const(zeros), G.const(zeros)
        outs = []
        for t in range(k):
            z = G.affine(G.concat_cols(seq[t], h), w, bias)
            i = G.sigmoid(G.slice_cols(z, 0, d))
            f = G.sigmoid(G.slice_cols(z, d, 2 * d))
            g = G.tanh(G.slice_cols(z, 2 * d, 3 * d))
            o = G.sigmoid(G.slice_cols(z, 3 * d, 4 * d))
            c = G.add(G.mul(f, c), G.mul(i, g))
            h = G.mul(o, G.tanh(c))
            outs.append(h)
        seq = outs
    return seq[-1]


def sequence_logits_graph(P, cfg: TcmConfig, vis: np.ndarray,
                          hist: np.ndarray, batch: int, k: int) -> G.Node:
    """(batch, C) logits for stacked equal-length sequences.

    vis is (batch*k, d_v) and hist (batch*k, d_h), rows grouped per sample.
    """
    xv = temporal_prior_graph(G.const(vis), batch, k)
    xh = temporal_prior_graph(G.const(hist), batch, k)
    hv = _lstm_stack_graph(P, "vis", xv, batch, k, cfg.d_v)
    hh = _lstm_stack_graph(P, "hist", xh, batch, k, cfg.d_h)
    z1 = G.relu(G.affine(G.concat_cols(hv, hh), P["mlp.w1"], P["mlp.b1"]))
    return G.affine(z1, P["mlp.w2"], P["mlp.b2"])


def batch_loss_graph(params: ParamSet, cfg: TcmConfig,
                     samples) -> tuple[G.Node, float]:
    """(loss, accuracy) over a batch of (vis, hist, label) crops.

    Samples are grouped by length into stacked graphs; the scalar loss is
    the sample-weighted mean of the per-group cross-entropies, i.e. the
    plain mean over the whole batch.
    """
    if not samples:
        raise ValueError("empty batch")
    P = G.bind(params)
    by_len: dict[int, list] = {}
    for s in samples:
        by_len.setdefault(s[0].shape[0], []).append(s)
    parts, correct = [], 0
    for k in sorted(by_len):
        group = by_len[k]
        vis = np.concatenate([s[0] for s in group])
        hist = np.concatenate([s[1] for s in group])
        labels = np.asarray([s[2] for s in group], dtype=np.int64)
        logits = sequence_logits_graph(P, cfg, vis, hist, len(group), k)
        correct += int((logits.value.argmax(axis=1) == labels).sum())
        parts.append(G.scale(G.softmax_cross_entropy(logits, labels),
                             len(group) / len(samples)))
    return G.add_n(parts), correct / len(samples)


def _shot_banks(clips):
    """Stack every shot once; returns (vis, hist, {video: (row0, row1)})."""
    by_video: dict[str, list] = {}
    for clip in clips:
        by_video.setdefault(clip.video_id, []).extend(clip.shots)
    vis, hist, slices, row = [], [], {}, 0
    for vid, shots in by_video.items():
        slices[vid] = (row, row + len(shots))
        row += len(shots)
        vis.extend(s.feature for s in shots)
        hist.extend(s.histogram for s in shots)
    return np.stack(vis), np.stack(hist), slices


def sample_crop(rng: np.random.Generator, clip: ClipSample,
                crop_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Random run of 2..crop_max consecutive shots as (vis, hist) stacks."""
    n = len(clip)
    if n < 2:
        raise ValueError(f"clip {clip.clip_id} has {n} shot(s)")
    length = int(rng.integers(2, min(n, crop_max) + 1))
    s0 = int(rng.integers(0, n - length + 1))
    shots = clip.shots[s0:s0 + length]
    return (np.stack([s.feature for s in shots]),
            np.stack([s.histogram for s in shots]))


def train_tcm(clips, cfg: TcmConfig, tcfg: TrainTcmConfig, out_dir=None,
              init: ParamSet | None = None):
    """Train on crops of the given clips; returns (params, history).

    history holds one dict per step with keys step, lr, loss, acc. With
    out_dir set, every log_every-th record streams to train_log.jsonl, a
    numbered checkpoint lands every checkpoint_every steps, and the final
    weights land in tcm.t2vc.
    """
    eligible = [c for c in clips if len(c) >= 2]
    if not eligible:
        raise ValueError("no clip has two or more shots")
    kinds = cfg.kinds
    vis_bank, hist_bank, slices = _shot_banks(clips)
    if DistortionKind.REPLACEMENT in kinds and len(slices) < 2:
        raise ValueError("replacement needs shots from at least two videos")
    others = {vid: np.concatenate([np.arange(0, a), np.arange(b, len(vis_bank))])
              for vid, (a, b) in slices.items()}

    rng = np.random.default_rng(tcfg.seed)
    params = init if init is not None else init_tcm_params(cfg, tcfg.seed)
    schedule = LrSchedule(base_lr=tcfg.base_lr, warmup_steps=tcfg.warmup_steps,
                          decay_epochs=tcfg.decay_steps,
                          decay_factor=tcfg.decay_factor, steps_per_epoch=1)

    log_f = None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_f = open(out / "train_log.jsonl", "w", encoding="utf-8")

    history = []
    try:
        for step in range(tcfg.steps):
            samples = []
            for _ in range(tcfg.batch_size):
                clip = eligible[int(rng.integers(len(eligible)))]
                vis, hist = sample_crop(rng, clip, tcfg.crop_max)
                kind = sample_distortion(rng, kinds)
                donor = others[clip.video_id] if kind is DistortionKind.REPLACEMENT else None
                vis2, hist2, _ = apply_distortion(
                    rng, kind, vis, hist,
                    donor_vis=None if donor is None else vis_bank[donor],
                    donor_hist=None if donor is None else hist_bank[donor])
                samples.append((vis2, hist2, kinds.index(kind)))
            loss, acc = batch_loss_graph(params, cfg, samples)
            grads = grad(loss, params)
            lr = lr_at(schedule, step)
            params = sgd_step(params, grads, lr)
            rec = {"step": step, "lr": lr, "loss": float(loss.value),
                   "acc": acc}
            history.append(rec)
            if log_f and (step % tcfg.log_every == 0):
                log_f.write(json.dumps(rec) + "\n")
            if (out is not None and tcfg.checkpoint_every > 0
                    and (step + 1) % tcfg.checkpoint_every == 0):
                save_checkpoint(out / f"tcm_step{step + 1:06d}.t2vc", params,
                                tcm_config_dict(cfg))
        if log_f and history and (tcfg.steps - 1) % tcfg.log_every != 0:
            log_f.write(json.dumps(history[-1]) + "\n")
    finally:
        if log_f:
            log_f.close()
    if out is not None:
        save_checkpoint(out / "tcm.t2vc", params, tcm_config_dict(cfg))
    return params, history

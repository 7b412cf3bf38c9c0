"""Training loop for the retrieval model.

Each batch of positive bags becomes one gradient graph: all shots of the
batch are encoded as a single matrix, pooled per clip with segment means,
and scored against every text in the batch. The loss masks then pick each
bag's own texts as positives and the other bags' texts as negatives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..datagen import build_positive_bags, save_checkpoint
from ..numkit import LrSchedule, ParamSet, grad, graph as G, lr_at, sgd_step
from .model import CrmConfig, MODES, config_dict, init_crm_params, split_point

LOSSES = ("milnce", "vse", "vsepp")


@dataclass(frozen=True)
class TrainCrmConfig:
    mode: str = "parallel"
    loss: str = "milnce"
    epochs: int = 30
    batch_size: int = 16
    base_lr: float = 0.05
    warmup_steps: int = 20
    decay_epochs: tuple[int, ...] = ()
    decay_factor: float = 0.1
    margin: float = 0.2
    l_max: int = 3
    window_s: float = 3.0
    seed: int = 0
    log_every: int = 25
    checkpoint_every: int = 200

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.epochs < 1 or self.batch_size < 2:
            raise ValueError("need epochs >= 1 and batch_size >= 2")
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")


def _clip_feature_block(bags):
    """Stack all shots of the batch; return (feats, starts, stops)."""
    feats = np.concatenate(
        [np.stack([s.feature for s in bag.clip.shots]) for bag in bags])
    lens = np.array([len(bag.clip) for bag in bags], dtype=np.int64)
    stops = np.cumsum(lens)
    starts = stops - lens
    return feats.astype(np.float32), starts, stops


def _text_block(bags):
    """Concatenate every bag text; return (token_ids, starts, stops, owners)."""
    ids, owners, lens = [], [], []
    for i, bag in enumerate(bags):
        for t in bag.texts:
            ids.extend(t.tokens)
            owners.append(i)
            lens.append(len(t.tokens))
    stops = np.cumsum(np.asarray(lens, dtype=np.int64))
    starts = stops - lens
    return (np.asarray(ids, dtype=np.int64), starts, stops,
            np.asarray(owners, dtype=np.int64))


def _encode_shots_graph(P, feats):
    x = G.const(feats)
    h = G.relu(G.affine(x, P["shot_mlp.w1"], P["shot_mlp.b1"]))
    return G.affine(h, P["shot_mlp.w2"], P["shot_mlp.b2"])


def _encode_texts_graph(P, token_ids, tstarts, tstops):
    rows = G.gather_rows(P["text_embed.table"], token_ids)
    pooled = G.segment_max(rows, tstarts, tstops)
    h = G.relu(G.affine(pooled, P["text_mlp.w1"], P["text_mlp.b1"]))
    return G.affine(h, P["text_mlp.w2"], P["text_mlp.b2"])


def _condition_texts_graph(P, g, ctx):
    """g - cos(ctx, g) * (ctx @ W), then the head MLP, all rowwise."""
    m = G.rowwise_cos_clamped(ctx, g)
    g1 = G.sub(g, G.mul(m, G.matmul(ctx, P["interact.w"])))
    h = G.relu(G.affine(g1, P["head_mlp.w1"], P["head_mlp.b1"]))
    return G.affine(h, P["head_mlp.w2"], P["head_mlp.b2"])


def batch_loss_graph(params: ParamSet, bags, tcfg: TrainCrmConfig,
                     splits=None) -> G.Node:
    """Scalar loss node for one batch of bags.

    splits: per-bag prefix length, required in adaptive mode.
    """
    if len(bags) < 2:
        raise ValueError("need at least two bags for in-batch negatives")
    P = G.bind(params)

    own_only = tcfg.loss in ("vse", "vsepp")
    if own_only:
        bags = [type(b)(clip=b.clip, texts=(b.texts[0],)) for b in bags]

    feats, cstarts, cstops = _clip_feature_block(bags)
    token_ids, tstarts, tstops, owners = _text_block(bags)
    shot_emb = _encode_shots_graph(P, feats)
    g = _encode_texts_graph(P, token_ids, tstarts, tstops)

    if tcfg.mode == "parallel":
        f = G.segment_mean(shot_emb, cstarts, cstops)
        logits = G.matmul_nt(f, g)
    else:
        if splits is None or len(splits) != len(bags):
            raise ValueError("adaptive mode needs one split point per bag")
        splits = np.asarray(splits, dtype=np.int64)
        f_a = G.segment_mean(shot_emb, cstarts, cstarts + splits)
        f_b = G.segment_mean(shot_emb, cstarts + splits, cstops)
        ctx = G.gather_rows(f_a, owners)
        logits = G.matmul_nt(f_b, _condition_texts_graph(P, g, ctx))

    n = len(bags)
    if tcfg.loss == "milnce":
        terms = []
        for i in range(n):
            pos = np.zeros(logits.value.shape, dtype=bool)
            pos[i, owners == i] = True
            all_i = np.zeros_like(pos)
            all_i[i, :] = True
            terms.append(G.sub(G.masked_logsumexp(logits, all_i),
                               G.masked_logsumexp(logits, pos)))
        return G.scale(G.add_n(terms), 1.0 / n)

    # own-text square scores: one text per bag, so logits is (n, n)
    dt = logits.value.dtype
    margin = G.const(np.asarray(tcfg.margin, dtype=dt))
    offdiag = G.const((1.0 - np.eye(n)).astype(dt))
    hinge = G.mul(G.relu(G.add(G.sub(logits, G.diag_as_row(logits)), margin)),
                  offdiag)
    if tcfg.loss == "vse":
        return G.scale(G.sum_all(hinge), 1.0 / n)
    return G.scale(G.sum_all(G.max_axis0(hinge)), 1.0 / n)


def train_crm(clips, chunks, cfg: CrmConfig, tcfg: TrainCrmConfig,
              out_dir=None, init: ParamSet | None = None):
    """Train on the given clips; returns (params, history).

    history holds one dict per step with keys step, lr, loss. With out_dir
    set, every log_every-th record streams to train_log.jsonl, a numbered
    checkpoint lands every checkpoint_every steps, and the final weights
    land in crm.t2vc.
    """
    if tcfg.mode != cfg.mode:
        raise ValueError(f"train mode {tcfg.mode!r} != model mode {cfg.mode!r}")
    bags, _ = build_positive_bags(clips, chunks, l_max=tcfg.l_max,
                                  window_s=tcfg.window_s)
    if tcfg.mode == "adaptive":
        bags = [b for b in bags if len(b.clip) >= 2]
    if len(bags) < tcfg.batch_size:
        raise ValueError(f"only {len(bags)} usable bags for batch size "
                         f"{tcfg.batch_size}")

    rng = np.random.default_rng(tcfg.seed)
    params = init if init is not None else init_crm_params(cfg, tcfg.seed)

    batch_bounds = [(i, min(i + tcfg.batch_size, len(bags)))
                    for i in range(0, len(bags), tcfg.batch_size)]
    batch_bounds = [(a, b) for a, b in batch_bounds if b - a >= 2]
    schedule = LrSchedule(base_lr=tcfg.base_lr, warmup_steps=tcfg.warmup_steps,
                          decay_epochs=tcfg.decay_epochs,
                          decay_factor=tcfg.decay_factor,
                          steps_per_epoch=len(batch_bounds))

    log_f = None
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_f = open(out / "train_log.jsonl", "w", encoding="utf-8")

    history = []
    step = 0
    try:
        for _epoch in range(tcfg.epochs):
            order = rng.permutation(len(bags))
            for a, b in batch_bounds:
                batch = [bags[j] for j in order[a:b]]
                splits = None
                if tcfg.mode == "adaptive":
                    splits = [split_point(rng, len(bag.clip)) for bag in batch]
                loss = batch_loss_graph(params, batch, tcfg, splits)
                grads = grad(loss, params)
                lr = lr_at(schedule, step)
                params = sgd_step(params, grads, lr)
                rec = {"step": step, "lr": lr, "loss": float(loss.value)}
                history.append(rec)
                if log_f and (step % tcfg.log_every == 0):
                    log_f.write(json.dumps(rec) + "\n")
                step += 1
                if (out is not None and tcfg.checkpoint_every > 0
                        and step % tcfg.checkpoint_every == 0):
                    save_checkpoint(out / f"crm_step{step:06d}.t2vc", params,
                                    config_dict(cfg))
        if log_f and history and (step - 1) % tcfg.log_every != 0:
            log_f.write(json.dumps(history[-1]) + "\n")
    finally:
        if log_f:
            log_f.close()
    if out is not None:
        save_checkpoint(out / "crm.t2vc", params, config_dict(cfg))
    return params, history

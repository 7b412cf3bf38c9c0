"""Clip retrieval model: shot and text encoders sharing one embedding space.

Shots pass through a two-layer MLP; a clip embedding is the mean of its
shot embeddings. Texts gather token embeddings, max-pool them, and pass
through their own two-layer MLP. In conditioned mode a retrieved prefix
reshapes the text query: the component of the query explained by the prefix
is damped (scaled by their clamped cosine) and the result is refined by a
small head MLP.

All inference here is plain numpy on float32; training builds the same
computations as a gradient graph in train.py.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numkit import ParamSet

MODES = ("parallel", "adaptive")

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class CrmConfig:
    """Sizes for the retrieval model. Defaults are the small desk profile."""

    d_v: int = 32          # shot feature dim
    d_e: int = 32          # joint embedding dim
    hidden: int = 128      # hidden width of the shot and text MLPs
    head_hidden: int = 32  # hidden width of the conditioning head
    vocab_size: int = 4096
    mode: str = "parallel"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for f in ("d_v", "d_e", "hidden", "head_hidden", "vocab_size"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")

    @staticmethod
    def paper() -> "CrmConfig":
        """The full-scale profile from the reference configuration."""
        return CrmConfig(d_v=512, d_e=512, hidden=2048, head_hidden=512,
                         vocab_size=4096)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-s, s, size=shape).astype(np.float32)


def init_crm_params(cfg: CrmConfig, seed: int) -> ParamSet:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases. Draw order is fixed."""
    rng = np.random.default_rng(seed)
    p = ParamSet()
    p["shot_mlp.w1"] = _uniform(rng, (cfg.d_v, cfg.hidden), cfg.d_v)
    p["shot_mlp.b1"] = np.zeros(cfg.hidden, dtype=np.float32)
    p["shot_mlp.w2"] = _uniform(rng, (cfg.hidden, cfg.d_e), cfg.hidden)
    p["shot_mlp.b2"] = np.zeros(cfg.d_e, dtype=np.float32)
    p["text_embed.table"] = _uniform(rng, (cfg.vocab_size, cfg.d_e), cfg.d_e)
    p["text_mlp.w1"] = _uniform(rng, (cfg.d_e, cfg.hidden), cfg.d_e)
    p["text_mlp.b1"] = np.zeros(cfg.hidden, dtype=np.float32)
    p["text_mlp.w2"] = _uniform(rng, (cfg.hidden, cfg.d_e), cfg.hidden)
    p["text_mlp.b2"] = np.zeros(cfg.d_e, dtype=np.float32)
    p["interact.w"] = _uniform(rng, (cfg.d_e, cfg.d_e), cfg.d_e)
    p["head_mlp.w1"] = _uniform(rng, (cfg.d_e, cfg.head_hidden), cfg.d_e)
    p["head_mlp.b1"] = np.zeros(cfg.head_hidden, dtype=np.float32)
    p["head_mlp.w2"] = _uniform(rng, (cfg.head_hidden, cfg.d_e), cfg.head_hidden)
    p["head_mlp.b2"] = np.zeros(cfg.d_e, dtype=np.float32)
    return p


def config_dict(cfg: CrmConfig) -> dict:
    return {"d_v": cfg.d_v, "d_e": cfg.d_e, "hidden": cfg.hidden,
            "head_hidden": cfg.head_hidden, "vocab_size": cfg.vocab_size,
            "mode": cfg.mode}


def crm_config_from_dict(d: dict) -> CrmConfig:
    return CrmConfig(**{k: d[k] for k in
                        ("d_v", "d_e", "hidden", "head_hidden", "vocab_size",
                         "mode")})


# ------------------------------------------------------------ numpy forward

def embed_shots(params: ParamSet, feats: np.ndarray) -> np.ndarray:
    """(n, d_v) -> (n, d_e): per-shot MLP with a ReLU between the layers."""
    h = np.maximum(feats @ params["shot_mlp.w1"] + params["shot_mlp.b1"], 0.0)
    return h @ params["shot_mlp.w2"] + params["shot_mlp.b2"]


def encode_shot_sequence(params: ParamSet, feats: np.ndarray) -> np.ndarray:
    """(k, d_v) -> (d_e,): mean of the shot embeddings."""
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError(f"need a non-empty (k, d_v) array, got {feats.shape}")
    return embed_shots(params, feats).mean(axis=0)


def encode_texts(params: ParamSet, token_lists) -> np.ndarray:
    """List of token id tuples -> (T, d_e). Tokens max-pool, then MLP."""
    pooled = np.empty((len(token_lists), params["text_embed.table"].shape[1]),
                      dtype=np.float32)
    table = params["text_embed.table"]
    for i, toks in enumerate(token_lists):
        if len(toks) == 0:
            raise ValueError(f"text {i} has no tokens")
        pooled[i] = table[np.asarray(toks, dtype=np.int64)].max(axis=0)
    h = np.maximum(pooled @ params["text_mlp.w1"] + params["text_mlp.b1"], 0.0)
    return h @ params["text_mlp.w2"] + params["text_mlp.b2"]


def encode_text(params: ParamSet, tokens) -> np.ndarray:
    """Token ids -> (d_e,)."""
    return encode_texts(params, [tokens])[0]


def cos_sim_clamped(a: np.ndarray, b: np.ndarray) -> float:
    """max(0, cos(a, b)); 0 when either vector has near-zero norm."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= _NORM_EPS or nb <= _NORM_EPS:
        return 0.0
    return float(max(0.0, float(a @ b) / (na * nb)))


def context_interact(params: ParamSet, f_ctx: np.ndarray,
                     g: np.ndarray) -> np.ndarray:
    """Damp the part of query g already explained by the context embedding.

    g' = g - max(0, cos(f_ctx, g)) * (f_ctx @ W)
    """
    m = cos_sim_clamped(f_ctx, g)
    return g - m * (f_ctx @ params["interact.w"])


def head_apply(params: ParamSet, g: np.ndarray) -> np.ndarray:
    """Refine a conditioned query with the small head MLP."""
    h = np.maximum(g @ params["head_mlp.w1"] + params["head_mlp.b1"], 0.0)
    return h @ params["head_mlp.w2"] + params["head_mlp.b2"]


def step_query(params: ParamSet, g: np.ndarray, prefix_mean: np.ndarray | None,
               mode: str) -> np.ndarray:
    """Query used at the next retrieval step given the prefix context.

    In parallel mode the text query is reused unchanged at every step. In
    adaptive mode the query is conditioned on the mean embedding of the
    shots retrieved so far; with no prefix the context is the zero vector,
    which leaves g itself as the head input.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "parallel":
        return g
    ctx = prefix_mean if prefix_mean is not None \
        else np.zeros_like(g)
    return head_apply(params, context_interact(params, ctx, g))


def split_point(rng: np.random.Generator, n_shots: int) -> int:
    """Uniform prefix length in 1..n_shots-1; needs at least two shots."""
    if n_shots < 2:
        raise ValueError(f"cannot split a clip of {n_shots} shot(s)")
    return int(rng.integers(1, n_shots))


def batch_bag_logits(params: ParamSet, bags, mode: str,
                     splits=None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Reference scores for a batch of positive bags, plain numpy.

    Returns one (positive_logits, negative_logits) pair per bag, where the
    logits are inner products between the bag's clip embedding and every
    text in the batch; positives are the bag's own texts, negatives the
    texts of the other bags. In adaptive mode each clip is split at
    splits[i]: the prefix becomes the conditioning context for that bag's
    texts and the suffix becomes the retrieval target.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    owners: list[int] = []
    token_lists = []
    for i, bag in enumerate(bags):
        for t in bag.texts:
            owners.append(i)
            token_lists.append(t.tokens)
    g_all = encode_texts(params, token_lists)

    if mode == "parallel":
        f = np.stack([encode_shot_sequence(
            params, np.stack([s.feature for s in bag.clip.shots]))
            for bag in bags])
        g_eff = g_all
    else:
        if splits is None or len(splits) != len(bags):
            raise ValueError("adaptive mode needs one split point per bag")
        f_a, f_b = [], []
        for bag, j in zip(bags, splits):
            feats = np.stack([s.feature for s in bag.clip.shots])
            if not 1 <= j < len(feats):
                raise ValueError(f"split {j} out of range for {len(feats)} shots")
            f_a.append(encode_shot_sequence(params, feats[:j]))
            f_b.append(encode_shot_sequence(params, feats[j:]))
        f = np.stack(f_b)
        ctx = np.stack(f_a)
        g_eff = np.stack([
            head_apply(params, context_interact(params, ctx[o], g))
            for o, g in zip(owners, g_all)])

    scores = f @ g_eff.T  # (B, T)
    owners = np.asarray(owners)
    out = []
    for i in range(len(bags)):
        own = owners == i
        out.append((scores[i, own], scores[i, ~own]))
    return out

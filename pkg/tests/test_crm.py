"""Tests for the retrieval model, its losses, and training."""

import math

import numpy as np
import pytest

from t2v import numkit
from t2v.crm import (
    CrmConfig,
    TrainCrmConfig,
    batch_bag_logits,
    batch_loss_graph,
    context_interact,
    cos_sim_clamped,
    crm_config_from_dict,
    embed_shots,
    encode_shot_sequence,
    encode_text,
    encode_texts,
    head_apply,
    init_crm_params,
    mil_nce_batch,
    mil_nce_loss,
    split_point,
    step_query,
    train_crm,
    vse_loss,
    vsepp_loss,
)
from t2v.crm.model import config_dict
from t2v.datagen import (
    ClipSample,
    PlantedCorpusConfig,
    PositiveBag,
    ShotRecord,
    TranscriptChunk,
    build_clips,
    build_positive_bags,
    generate_corpus,
    load_checkpoint,
    params_hash,
)
from t2v.numkit import ParamSet, finite_diff_grad, grad, max_rel_err


# ------------------------------------------------------------------- losses

class TestMilNce:
    def test_single_positive_equal_scores(self):
        assert mil_nce_loss([0.0], [0.0]) == pytest.approx(math.log(2), abs=1e-9)

    def test_two_positives(self):
        # lse(0,0,0) - lse(0,0) = ln 3 - ln 2
        assert mil_nce_loss([0.0, 0.0], [0.0]) == pytest.approx(
            math.log(3) - math.log(2), abs=1e-9)

    def test_confident_positive(self):
        assert mil_nce_loss([10.0], [0.0]) == pytest.approx(
            math.log1p(math.exp(-10.0)), abs=1e-9)

    def test_shift_invariance(self):
        pos = np.array([0.3, -1.2])
        neg = np.array([0.1, 0.9, -0.4])
        a = mil_nce_loss(pos, neg)
        b = mil_nce_loss(pos + 123.456, neg + 123.456)
        assert a == pytest.approx(b, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mil_nce_loss([], [0.0])
        with pytest.raises(ValueError):
            mil_nce_loss([0.0], [])

    def test_batch_mean(self):
        pairs = [(np.array([0.0]), np.array([0.0])),
                 (np.array([10.0]), np.array([0.0]))]
        want = (math.log(2) + math.log1p(math.exp(-10.0))) / 2
        assert mil_nce_batch(pairs) == pytest.approx(want, abs=1e-9)


class TestVse:
    def test_worked_example(self):
        s = np.array([[1.0, 0.0], [2.0, 1.0]])
        assert vse_loss(s, margin=0.0) == pytest.approx(1.0)
        assert vsepp_loss(s, margin=0.0) == pytest.approx(1.0)

    def test_margin(self):
        s = np.array([[1.0, 0.0], [2.0, 1.0]])
        # off-diagonal hinges: (0,1): 0.5+0-1 -> 0; (1,0): 0.5+2-1 = 1.5
        assert vse_loss(s, margin=0.5) == pytest.approx(1.5)
        assert vsepp_loss(s, margin=0.5) == pytest.approx(1.5)

    def test_diag_excluded(self):
        s = np.zeros((3, 3))
        assert vse_loss(s, margin=0.2) == pytest.approx(0.2 * 6)
        assert vsepp_loss(s, margin=0.2) == pytest.approx(0.2 * 3)

    def test_perfect_separation_is_zero(self):
        s = np.array([[5.0, 0.0], [0.0, 5.0]])
        assert vse_loss(s, margin=1.0) == 0.0
        assert vsepp_loss(s, margin=1.0) == 0.0

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            vse_loss(np.zeros((2, 3)))


# ------------------------------------------------------------ model pieces

class TestCosAndInteract:
    def test_cos_basic(self):
        assert cos_sim_clamped(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 1.0
        assert cos_sim_clamped(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
        # anti-aligned clamps to zero
        assert cos_sim_clamped(np.array([1.0, 0.0]), np.array([-1.0, 0.0])) == 0.0
        assert cos_sim_clamped(np.zeros(2), np.array([1.0, 0.0])) == 0.0

    def _identity_interact(self, d):
        p = ParamSet()
        p["interact.w"] = np.eye(d)
        return p

    def test_interact_worked_example(self):
        p = self._identity_interact(2)
        f = np.array([1.0, 0.0])
        g = np.array([1.0, 1.0]) / math.sqrt(2)
        out = context_interact(p, f, g)
        want = np.array([0.0, 1.0 / math.sqrt(2)])
        assert np.max(np.abs(out - want)) < 1e-12

    def test_interact_orthogonal_context_is_noop(self):
        p = self._identity_interact(3)
        f = np.array([1.0, 0.0, 0.0])
        g = np.array([0.0, 2.0, 1.0])
        assert np.array_equal(context_interact(p, f, g), g)

    def test_interact_zero_context_is_noop(self):
        p = self._identity_interact(3)
        g = np.array([0.3, -0.2, 0.9])
        assert np.array_equal(context_interact(p, np.zeros(3), g), g)


def _desk_cfg(**kw):
    base = dict(d_v=6, d_e=5, hidden=8, head_hidden=4, vocab_size=31)
    base.update(kw)
    return CrmConfig(**base)


class TestInitAndEncoders:
    def test_init_shapes_and_determinism(self):
        cfg = _desk_cfg()
        a = init_crm_params(cfg, seed=0)
        b = init_crm_params(cfg, seed=0)
        c = init_crm_params(cfg, seed=1)
        assert params_hash(a) == params_hash(b)
        assert params_hash(a) != params_hash(c)
        assert a["shot_mlp.w1"].shape == (6, 8)
        assert a["shot_mlp.w2"].shape == (8, 5)
        assert a["text_embed.table"].shape == (31, 5)
        assert a["interact.w"].shape == (5, 5)
        assert a["head_mlp.w1"].shape == (5, 4)
        for name in a.names():
            assert a[name].dtype == np.float32
        # scaled-uniform bound for the first weight
        assert np.abs(a["shot_mlp.w1"]).max() <= 1 / math.sqrt(6)
        assert np.all(a["shot_mlp.b1"] == 0)

    def test_config_roundtrip(self):
        cfg = _desk_cfg(mode="adaptive")
        assert crm_config_from_dict(config_dict(cfg)) == cfg

    def test_paper_profile_shapes(self):
        p = init_crm_params(CrmConfig.paper(), seed=0)
        assert p["shot_mlp.w1"].shape == (512, 2048)
        assert p["shot_mlp.w2"].shape == (2048, 512)

    def test_encode_shot_sequence_is_mean(self):
        cfg = _desk_cfg()
        p = init_crm_params(cfg, seed=3)
        feats = np.random.default_rng(0).normal(size=(4, 6)).astype(np.float32)
        assert np.allclose(encode_shot_sequence(p, feats),
                           embed_shots(p, feats).mean(axis=0), atol=1e-6)

    def test_encode_text_max_pool(self):
        cfg = _desk_cfg()
        p = init_crm_params(cfg, seed=3)
        # pooling is a max, so duplicating a token changes nothing
        a = encode_text(p, (3, 7))
        b = encode_text(p, (3, 7, 7, 3))
        assert np.allclose(a, b, atol=0)
        with pytest.raises(ValueError):
            encode_texts(p, [()])

    def test_step_query_modes(self):
        cfg = _desk_cfg()
        p = init_crm_params(cfg, seed=5)
        g = np.random.default_rng(1).normal(size=5).astype(np.float32)
        pref = np.random.default_rng(2).normal(size=5).astype(np.float32)
        assert step_query(p, g, pref, "parallel") is g
        out = step_query(p, g, pref, "adaptive")
        want = head_apply(p, context_interact(p, pref, g))
        assert np.allclose(out, want, atol=0)
        # no prefix: zero context leaves g as the head input
        assert np.allclose(step_query(p, g, None, "adaptive"),
                           head_apply(p, g), atol=0)
        with pytest.raises(ValueError):
            step_query(p, g, pref, "bogus")

    @pytest.mark.parametrize("seed", range(5))
    def test_split_point_bounds(self, seed):
        rng = np.random.default_rng(seed)
        for k in (2, 3, 5, 9):
            js = {split_point(rng, k) for _ in range(50)}
            assert min(js) >= 1 and max(js) <= k - 1
        with pytest.raises(ValueError):
            split_point(rng, 1)


# ----------------------------------------------------- bag scoring fixtures

def _mini_shot(shot_id, video, start, feat):
    return ShotRecord(shot_id=shot_id, video_id=video, start_s=start,
                      end_s=start + 1.0,
                      feature=np.asarray(feat, dtype=np.float32),
                      histogram=np.full(6, 0.5, dtype=np.float32))


def _mini_chunk(video, start, tokens):
    return TranscriptChunk(video_id=video, start_s=start, end_s=start + 0.5,
                           tokens=tokens, text=" ".join(map(str, tokens)))


def _identity_params(d):
    """MLPs act as the identity on nonnegative inputs; table row t is e_t."""
    p = ParamSet()
    eye = np.eye(d, dtype=np.float32)
    zeros = np.zeros(d, dtype=np.float32)
    p["shot_mlp.w1"] = eye
    p["shot_mlp.b1"] = zeros
    p["shot_mlp.w2"] = eye
    p["shot_mlp.b2"] = zeros
    p["text_embed.table"] = np.eye(d, dtype=np.float32)
    p["text_mlp.w1"] = eye
    p["text_mlp.b1"] = zeros
    p["text_mlp.w2"] = eye
    p["text_mlp.b2"] = zeros
    p["interact.w"] = eye
    p["head_mlp.w1"] = eye
    p["head_mlp.b1"] = zeros
    p["head_mlp.w2"] = eye
    p["head_mlp.b2"] = zeros
    return p


class TestBatchBagLogits:
    def test_two_bag_worked_example(self):
        # bag 0: clip along e0, its own single text along e0
        # bag 1: clip along e1, two texts along e1
        p = _identity_params(2)
        c0 = ClipSample(clip_id=0, shots=(_mini_shot(0, "a", 0.0, [1, 0]),),
                        text=_mini_chunk("a", 0.0, (0,)))
        c1 = ClipSample(clip_id=1, shots=(_mini_shot(1, "b", 0.0, [0, 1]),),
                        text=_mini_chunk("b", 0.0, (1,)))
        bags = [
            PositiveBag(clip=c0, texts=(c0.text,)),
            PositiveBag(clip=c1, texts=(c1.text, _mini_chunk("b", 1.2, (1,)))),
        ]
        out = batch_bag_logits(p, bags, mode="parallel")
        np.testing.assert_allclose(out[0][0], [1.0], atol=0)
        np.testing.assert_allclose(out[0][1], [0.0, 0.0], atol=0)
        np.testing.assert_allclose(out[1][0], [1.0, 1.0], atol=0)
        np.testing.assert_allclose(out[1][1], [0.0], atol=0)

    def test_adaptive_needs_splits(self):
        p = _identity_params(2)
        c0 = ClipSample(clip_id=0, shots=(_mini_shot(0, "a", 0.0, [1, 0]),
                                          _mini_shot(1, "a", 1.0, [1, 0])),
                        text=_mini_chunk("a", 0.0, (0,)))
        bags = [PositiveBag(clip=c0, texts=(c0.text,))] * 2
        with pytest.raises(ValueError):
            batch_bag_logits(p, bags, mode="adaptive")


# ------------------------------------------- graph loss vs numpy reference

def _corpus_bags(seed=0, l_max=3):
    cfg = PlantedCorpusConfig(n_videos=4, shots_per_video=18, n_concepts=10,
                              d_v=6, d_h=6, seed=seed, misalign_prob=0.2,
                              vocab_size=31)
    corpus = generate_corpus(cfg)
    clips, _ = build_clips(corpus)
    bags, _ = build_positive_bags(clips, corpus.chunks, l_max=l_max,
                                  window_s=3.0)
    return corpus, clips, bags


class TestGraphLossAgreesWithNumpy:
    """The graph-built training loss must match the independent numpy route."""

    def _params64(self, seed):
        return init_crm_params(_desk_cfg(), seed).astype(np.float64)

    def test_milnce_parallel(self):
        _, _, bags = _corpus_bags(seed=1)
        p = self._params64(0)
        batch = bags[:6]
        node = batch_loss_graph(p, batch, TrainCrmConfig(loss="milnce"))
        ref = mil_nce_batch(batch_bag_logits(p, batch, mode="parallel"))
        assert float(node.value) == pytest.approx(ref, abs=1e-9)

    def test_milnce_adaptive(self):
        _, _, bags = _corpus_bags(seed=2)
        p = self._params64(1)
        batch = [b for b in bags if len(b.clip) >= 2][:6]
        rng = np.random.default_rng(7)
        splits = [split_point(rng, len(b.clip)) for b in batch]
        node = batch_loss_graph(p, batch,
                                TrainCrmConfig(mode="adaptive", loss="milnce"),
                                splits)
        ref = mil_nce_batch(batch_bag_logits(p, batch, mode="adaptive",
                                             splits=splits))
        assert float(node.value) == pytest.approx(ref, abs=1e-9)

    def test_vse_parallel(self):
        _, _, bags = _corpus_bags(seed=3)
        p = self._params64(2)
        batch = bags[:5]
        margin = 0.2
        node = batch_loss_graph(p, batch,
                                TrainCrmConfig(loss="vse", margin=margin))
        f = np.stack([encode_shot_sequence(
            p, np.stack([s.feature for s in b.clip.shots])) for b in batch])
        g = encode_texts(p, [b.texts[0].tokens for b in batch])
        ref = vse_loss(f @ g.T, margin=margin) / len(batch)
        assert float(node.value) == pytest.approx(ref, abs=1e-9)

    def test_vsepp_adaptive(self):
        _, _, bags = _corpus_bags(seed=4)
        p = self._params64(3)
        batch = [b for b in bags if len(b.clip) >= 2][:5]
        rng = np.random.default_rng(11)
        splits = [split_point(rng, len(b.clip)) for b in batch]
        margin = 0.1
        node = batch_loss_graph(
            p, batch, TrainCrmConfig(mode="adaptive", loss="vsepp",
                                     margin=margin), splits)
        f_a, f_b = [], []
        for b, j in zip(batch, splits):
            feats = np.stack([s.feature for s in b.clip.shots])
            f_a.append(encode_shot_sequence(p, feats[:j]))
            f_b.append(encode_shot_sequence(p, feats[j:]))
        g = encode_texts(p, [b.texts[0].tokens for b in batch])
        g2 = np.stack([head_apply(p, context_interact(p, f_a[i], g[i]))
                       for i in range(len(batch))])
        ref = vsepp_loss(np.stack(f_b) @ g2.T, margin=margin) / len(batch)
        assert float(node.value) == pytest.approx(ref, abs=1e-9)


class TestGraphLossGradients:
    """Finite differences through the whole batch loss at float64."""

    def _tiny(self, mode, loss, seed):
        cfg = CrmConfig(d_v=3, d_e=3, hidden=4, head_hidden=3, vocab_size=7,
                        mode=mode)
        params = init_crm_params(cfg, seed).astype(np.float64)
        rng = np.random.default_rng(seed + 100)
        bags = []
        for i in range(3):
            shots = tuple(
                _mini_shot(10 * i + k, f"v{i}", float(k),
                           rng.normal(size=3)) for k in range(2 + i % 2))
            own = _mini_chunk(f"v{i}", 0.0,
                              tuple(int(t) for t in rng.integers(0, 7, size=2)))
            extra = _mini_chunk(f"v{i}", 1.2,
                                (int(rng.integers(0, 7)),))
            clip = ClipSample(clip_id=i, shots=shots, text=own)
            texts = (own, extra) if loss == "milnce" else (own,)
            bags.append(PositiveBag(clip=clip, texts=texts))
        tcfg = TrainCrmConfig(mode=mode, loss=loss, margin=0.1)
        splits = [1] * len(bags) if mode == "adaptive" else None
        return params, bags, tcfg, splits

    @pytest.mark.parametrize("mode,loss", [
        ("parallel", "milnce"), ("parallel", "vse"), ("parallel", "vsepp"),
        ("adaptive", "milnce"), ("adaptive", "vse"), ("adaptive", "vsepp"),
    ])
    def test_gradcheck(self, mode, loss):
        # seed chosen so the fixture sits away from the relu and clamped-cos
        # kinks that finite differences cannot straddle
        params, bags, tcfg, splits = self._tiny(mode, loss, seed=6)
        node = batch_loss_graph(params, bags, tcfg, splits)
        got = grad(node, params)
        want = finite_diff_grad(
            lambda p: float(batch_loss_graph(p, bags, tcfg, splits).value),
            params)
        assert max_rel_err(got, want) < 1e-4


# ----------------------------------------------------------------- training

class TestTrainCrm:
    def _setup(self):
        cfg = PlantedCorpusConfig(n_videos=6, shots_per_video=18,
                                  n_concepts=8, d_v=6, d_h=6, seed=0,
                                  vocab_size=31)
        corpus = generate_corpus(cfg)
        clips, _ = build_clips(corpus)
        return corpus, clips

    def test_loss_decreases_and_history(self):
        corpus, clips = self._setup()
        cfg = _desk_cfg()
        tcfg = TrainCrmConfig(epochs=8, batch_size=8, base_lr=0.05,
                              warmup_steps=5, seed=0)
        params, hist = train_crm(clips, corpus.chunks, cfg, tcfg)
        assert hist[0]["step"] == 0
        head = np.mean([h["loss"] for h in hist[:4]])
        tail = np.mean([h["loss"] for h in hist[-4:]])
        assert tail < head
        for h in hist:
            assert set(h) == {"step", "lr", "loss"}

    def test_deterministic(self):
        corpus, clips = self._setup()
        cfg = _desk_cfg()
        tcfg = TrainCrmConfig(epochs=2, batch_size=8, base_lr=0.02, seed=3)
        a, _ = train_crm(clips, corpus.chunks, cfg, tcfg)
        b, _ = train_crm(clips, corpus.chunks, cfg, tcfg)
        assert params_hash(a) == params_hash(b)

    def test_adaptive_runs_and_skips_unsplittable(self):
        corpus, clips = self._setup()
        single = ClipSample(clip_id=999, shots=(clips[0].shots[0],),
                            text=clips[0].text)
        cfg = _desk_cfg(mode="adaptive")
        tcfg = TrainCrmConfig(mode="adaptive", epochs=1, batch_size=8, seed=0,
                              base_lr=0.02)
        params, hist = train_crm(clips + [single], corpus.chunks, cfg, tcfg)
        assert len(hist) >= 1

    def test_writes_log_and_checkpoint(self, tmp_path):
        corpus, clips = self._setup()
        cfg = _desk_cfg()
        tcfg = TrainCrmConfig(epochs=1, batch_size=8, seed=0, base_lr=0.02,
                              log_every=1)
        params, hist = train_crm(clips, corpus.chunks, cfg, tcfg,
                                 out_dir=tmp_path)
        import json
        lines = [json.loads(x) for x in
                 (tmp_path / "train_log.jsonl").read_text().splitlines()]
        assert len(lines) == len(hist)
        loaded, meta = load_checkpoint(tmp_path / "crm.t2vc")
        assert params_hash(loaded) == params_hash(params)
        assert crm_config_from_dict(meta) == cfg

    def test_mode_mismatch_rejected(self):
        corpus, clips = self._setup()
        with pytest.raises(ValueError):
            train_crm(clips, corpus.chunks, _desk_cfg(),
                      TrainCrmConfig(mode="adaptive"))

    def test_vse_training_step_runs(self):
        corpus, clips = self._setup()
        cfg = _desk_cfg()
        tcfg = TrainCrmConfig(loss="vsepp", epochs=1, batch_size=8,
                              base_lr=0.01, margin=0.2, seed=0)
        params, hist = train_crm(clips, corpus.chunks, cfg, tcfg)
        assert all(np.isfinite(h["loss"]) for h in hist)

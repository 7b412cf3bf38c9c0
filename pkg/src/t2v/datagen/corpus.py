"""Planted synthetic corpus: concept-tagged shots plus timed transcripts.

Every shot carries a concept; its visual feature is the unit-normalized sum
of the concept center, a per-video drifting style vector, and isotropic
noise. Histograms follow a smooth per-video color profile. Each clip's
spoken words are its shots' concept words, laid out so the word-merge rule
reconstructs exactly one chunk per clip, with adjacent chunks ~1.1 s apart
(inside the positive window). With probability misalign_prob a clip's chunk
carries the words of an adjacent clip instead of its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .records import (
    HIST_TOL, K_MAX, ClipSample, PositiveBag, ShotRecord, TranscriptChunk,
    validate_histogram,
)
from .transcripts import DEFAULT_VOCAB, hash_token, merge_words, overlap_s

# shot/word timing constants; chosen so that in-clip word gaps stay < 1 s
# (merge) while clip boundaries leave >= 1.08 s of silence (split), and
# adjacent chunks land well inside the 3 s neighbor window
SHOT_DUR_MIN = 0.6
SHOT_DUR_MAX = 0.9
WORD_LEAD_S = 1.05    # first word this far after clip start
WORD_TAIL_S = 0.05    # last word no later than clip end minus this
WORD_DUR_S = 0.02
WORD_SPACING_MAX = 0.85


@dataclass(frozen=True)
class PlantedCorpusConfig:
    n_videos: int = 40
    shots_per_video: int = 30
    n_concepts: int = 64
    d_v: int = 32
    d_h: int = 24
    concepts_per_video: int = 4   # palette size each video draws its shots from
    clip_len_min: int = 2
    clip_len_max: int = 5
    style_drift: float = 0.05
    hist_drift: float = 0.15
    noise_sigma: float = 0.02
    misalign_prob: float = 0.0
    vocab_size: int = DEFAULT_VOCAB
    seed: int = 0

    def __post_init__(self):
        if self.d_h % 3 != 0 or self.d_h <= 0:
            raise ValueError(f"d_h must be a positive multiple of 3, got {self.d_h}")
        if self.clip_len_min < 2:
            raise ValueError("clip_len_min must be >= 2 (one-shot clips leave no room for words)")
        if self.clip_len_max < self.clip_len_min or self.clip_len_max > K_MAX:
            raise ValueError(f"clip_len_max must be in [clip_len_min, {K_MAX}]")
        if self.clip_len_max + self.clip_len_min - 1 > K_MAX:
            raise ValueError("clip length bounds can overflow the per-clip shot cap on merge")
        if not 0.0 <= self.misalign_prob <= 1.0:
            raise ValueError(f"misalign_prob must be in [0, 1], got {self.misalign_prob}")
        if min(self.n_videos, self.shots_per_video, self.n_concepts,
               self.concepts_per_video, self.d_v, self.vocab_size) <= 0:
            raise ValueError("counts and dims must be positive")
        if self.noise_sigma < 0 or self.style_drift < 0 or self.hist_drift < 0:
            raise ValueError("spread parameters must be non-negative")


@dataclass(frozen=True)
class GtClip:
    video_id: str
    shot_rows: tuple[int, ...]   # bank rows (== shot ids) of this clip's shots
    chunk_index: int             # temporally aligned chunk, global index
    source_clip: int             # clip whose concepts were spoken here


@dataclass(frozen=True)
class GroundTruth:
    concept_words: tuple[str, ...]
    shot_concepts: np.ndarray          # (N,) int32
    clips: tuple[GtClip, ...]


@dataclass
class Corpus:
    features: np.ndarray               # (N, d_v) float32, read-only
    hists: np.ndarray                  # (N, d_h) float32, read-only
    shots: list[ShotRecord]
    chunks: list[TranscriptChunk]
    gt: GroundTruth
    config: PlantedCorpusConfig
    _videos: dict[str, list[int]] | None = field(default=None, repr=False)

    @property
    def videos(self) -> dict[str, list[int]]:
        if self._videos is None:
            vids: dict[str, list[int]] = {}
            for i, s in enumerate(self.shots):
                vids.setdefault(s.video_id, []).append(i)
            self._videos = vids
        return self._videos

    def concept_token(self, concept: int) -> int:
        return hash_token(self.gt.concept_words[concept], self.config.vocab_size)


_CONSONANTS = "bcdfghjklmnpqrstvwz"
_VOWELS = "aeiou"


def _concept_words(rng: np.random.Generator, n: int) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    while len(out) < n:
        syll = int(rng.integers(2, 4))
        w = "".join(_CONSONANTS[rng.integers(len(_CONSONANTS))]
                    + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(syll))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def _clip_lengths(rng: np.random.Generator, total: int, lo: int, hi: int) -> list[int]:
    lens: list[int] = []
    rem = total
    while rem > 0:
        k = int(rng.integers(lo, hi + 1))
        k = min(k, rem)
        lens.append(k)
        rem -= k
    if len(lens) > 1 and lens[-1] < lo:
        tail = lens.pop()
        lens[-1] += tail
    return lens


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _f32(x: float) -> float:
    """Round to the nearest float32-representable double.

    All timestamps are quantized this way at generation so that the JSON
    manifests (which store float32-exact values) round-trip bit-identically.
    """
    return float(np.float32(x))


def generate_corpus(cfg: PlantedCorpusConfig) -> Corpus:
    """Deterministic planted corpus for cfg.seed; see the module docstring."""
    rng = np.random.default_rng(cfg.seed)
    words = _concept_words(rng, cfg.n_concepts)
    centers = rng.normal(size=(cfg.n_concepts, cfg.d_v))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    feat_rows: list[np.ndarray] = []
    hist_rows: list[np.ndarray] = []
    shot_meta: list[tuple[str, float, float]] = []
    shot_concepts: list[int] = []
    chunks: list[TranscriptChunk] = []
    gt_clips: list[GtClip] = []
    bins = cfg.d_h // 3

    for v in range(cfg.n_videos):
        video_id = f"v{v:05d}"
        n_shots = cfg.shots_per_video
        palette = rng.choice(cfg.n_concepts,
                             size=min(cfg.concepts_per_video, cfg.n_concepts),
                             replace=False)
        concepts = palette[rng.integers(len(palette), size=n_shots)]
        durs = rng.uniform(SHOT_DUR_MIN, SHOT_DUR_MAX, size=n_shots)
        starts = np.concatenate([[0.0], np.cumsum(durs)[:-1]])

        style = rng.normal(0.0, cfg.style_drift, size=cfg.d_v)
        hist_logits = rng.normal(0.0, 1.0, size=(3, bins))
        row0 = len(shot_meta)
        for i in range(n_shots):
            vec = centers[concepts[i]] + style + rng.normal(0.0, cfg.noise_sigma, cfg.d_v)
            nrm = np.linalg.norm(vec)
            if nrm < 1e-9:
                raise ArithmeticError("degenerate shot feature; bad config scales")
            feat_rows.append((vec / nrm).astype(np.float32))
            hist_rows.append(np.concatenate([_softmax(hist_logits[c]) for c in range(3)])
                             .astype(np.float32))
            shot_meta.append((video_id, _f32(starts[i]), _f32(starts[i] + durs[i])))
            shot_concepts.append(int(concepts[i]))
            style = style + rng.normal(0.0, cfg.style_drift, cfg.d_v)
            hist_logits = hist_logits + rng.normal(0.0, cfg.hist_drift, (3, bins))

        lens = _clip_lengths(rng, n_shots, cfg.clip_len_min, cfg.clip_len_max)
        clip_rows: list[tuple[int, ...]] = []
        pos = 0
        for k in lens:
            clip_rows.append(tuple(range(row0 + pos, row0 + pos + k)))
            pos += k

        first_clip = len(gt_clips)
        sources: list[int] = []
        for ci in range(len(clip_rows)):
            src = ci
            if len(clip_rows) > 1 and rng.random() < cfg.misalign_prob:
                options = [d for d in (ci - 1, ci + 1) if 0 <= d < len(clip_rows)]
                src = options[int(rng.integers(len(options)))]
            sources.append(src)

        video_words: list[tuple[str, float, float]] = []
        for ci, rows in enumerate(clip_rows):
            src_rows = clip_rows[sources[ci]]
            spoken = [words[shot_concepts[r]] for r in src_rows]
            c_start = shot_meta[rows[0]][1]
            c_end = shot_meta[rows[-1]][2]
            t0 = c_start + WORD_LEAD_S
            t1 = c_end - WORD_TAIL_S
            spacing = min(WORD_SPACING_MAX, (t1 - t0) / max(1, len(spoken) - 1))
            for i, w in enumerate(spoken):
                ws = _f32(t0 + i * spacing)
                video_words.append((w, ws, _f32(ws + WORD_DUR_S)))

        video_chunks = merge_words(video_words, video_id, vocab_size=cfg.vocab_size)
        if len(video_chunks) != len(clip_rows):
            raise RuntimeError(
                f"word layout produced {len(video_chunks)} chunks for "
                f"{len(clip_rows)} clips in {video_id}")
        chunk0 = len(chunks)
        chunks.extend(video_chunks)
        for ci, rows in enumerate(clip_rows):
            gt_clips.append(GtClip(video_id=video_id, shot_rows=rows,
                                   chunk_index=chunk0 + ci,
                                   source_clip=first_clip + sources[ci]))

    features = np.vstack(feat_rows)
    hists = np.vstack(hist_rows)
    features.setflags(write=False)
    hists.setflags(write=False)
    shots = [ShotRecord(shot_id=i, video_id=m[0], start_s=m[1], end_s=m[2],
                        feature=features[i], histogram=hists[i])
             for i, m in enumerate(shot_meta)]
    gt = GroundTruth(concept_words=tuple(words),
                     shot_concepts=np.asarray(shot_concepts, dtype=np.int32),
                     clips=tuple(gt_clips))
    return Corpus(features=features, hists=hists, shots=shots, chunks=chunks,
                  gt=gt, config=cfg)


def build_clips(corpus: Corpus) -> tuple[list[ClipSample], int]:
    """ClipSamples from the ground-truth shot groups, texts assigned by
    maximal temporal overlap (ties: earlier chunk start, then input order).

    Returns (clips, n_without_text); clips without any overlapping chunk are
    dropped from the list.
    """
    by_video: dict[str, list[tuple[int, TranscriptChunk]]] = {}
    for idx, c in enumerate(corpus.chunks):
        by_video.setdefault(c.video_id, []).append((idx, c))

    clips: list[ClipSample] = []
    skipped = 0
    for clip_id, g in enumerate(corpus.gt.clips):
        shots = tuple(corpus.shots[r] for r in g.shot_rows)
        c_start, c_end = shots[0].start_s, shots[-1].end_s
        best = None
        for idx, ch in by_video.get(g.video_id, ()):
            ov = overlap_s(c_start, c_end, ch.start_s, ch.end_s)
            if ov <= 0.0:
                continue
            key = (-ov, ch.start_s, idx)
            if best is None or key < best[0]:
                best = (key, ch)
        if best is None:
            skipped += 1
            continue
        clips.append(ClipSample(clip_id=clip_id, shots=shots, text=best[1]))
    return clips, skipped


def build_positive_bags(clips: list[ClipSample], chunks: list[TranscriptChunk],
                        l_max: int = 3, window_s: float = 3.0,
                        ) -> tuple[list[PositiveBag], dict]:
    """One bag per clip-with-text: the own chunk plus neighbors overlapping
    the own span widened by window_s, keeping the l_max temporally closest.

    Returns (bags, report); report counts clips that had no text.
    """
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    if window_s < 0:
        raise ValueError(f"window_s must be >= 0, got {window_s}")
    by_video: dict[str, list[TranscriptChunk]] = {}
    for c in chunks:
        by_video.setdefault(c.video_id, []).append(c)

    bags: list[PositiveBag] = []
    no_text = 0
    for clip in clips:
        own = clip.text
        if own is None:
            no_text += 1
            continue
        lo, hi = own.start_s - window_s, own.end_s + window_s
        cands = []
        for ch in by_video.get(clip.video_id, ()):
            if ch == own:
                continue
            if ch.start_s < hi and ch.end_s > lo:
                cands.append(ch)
        cands.sort(key=lambda ch: (abs(ch.mid_s - own.mid_s), ch.start_s))
        texts = (own, *cands[:l_max - 1])
        bags.append(PositiveBag(clip=clip, texts=texts))
    return bags, {"clips_without_text": no_text, "n_bags": len(bags)}


def split_videos(corpus: Corpus, eval_frac: float) -> tuple[list[str], list[str]]:
    """Deterministic video-level split; the last videos (by sorted id) are eval."""
    ids = sorted(corpus.videos)
    if eval_frac <= 0.0:
        return ids, []
    if eval_frac >= 1.0:
        return [], ids
    n_eval = min(len(ids) - 1, max(1, int(round(eval_frac * len(ids)))))
    return ids[:-n_eval], ids[-n_eval:]


def clips_for_videos(clips: list[ClipSample], video_ids) -> list[ClipSample]:
    keep = set(video_ids)
    return [c for c in clips if c.video_id in keep]


def config_as_dict(cfg: PlantedCorpusConfig) -> dict:
    return asdict(cfg)

"""Core data records: shots, transcript chunks, clips, positive bags."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

K_MAX = 10          # most shots a clip may hold
MAX_TEXT_LEN = 16   # most tokens a transcript chunk may hold
HIST_TOL = 1e-6     # per-channel histogram mass tolerance


def validate_histogram(hist: np.ndarray) -> None:
    """d_h split into 3 equal channel blocks, each non-negative and summing to 1."""
    if hist.ndim != 1 or hist.size % 3 != 0 or hist.size == 0:
        raise ValueError(f"histogram length must be a positive multiple of 3, got {hist.shape}")
    if np.any(hist < 0):
        raise ValueError("negative histogram entry")
    per = hist.size // 3
    sums = hist.reshape(3, per).sum(axis=1)
    if np.any(np.abs(sums - 1.0) > HIST_TOL):
        raise ValueError(f"channel block sums {sums} not within {HIST_TOL} of 1")


@dataclass(frozen=True)
class ShotRecord:
    shot_id: int
    video_id: str
    start_s: float
    end_s: float
    feature: np.ndarray     # (d_v,) float32, unit-ish visual embedding
    histogram: np.ndarray   # (d_h,) float32, 3 channel blocks

    def __post_init__(self):
        if self.end_s <= self.start_s:
            raise ValueError(f"shot {self.shot_id}: end {self.end_s} <= start {self.start_s}")
        if self.feature.ndim != 1:
            raise ValueError(f"shot {self.shot_id}: feature must be 1-d")
        validate_histogram(self.histogram)

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class TranscriptChunk:
    video_id: str
    start_s: float
    end_s: float
    tokens: tuple[int, ...]
    text: str = ""

    def __post_init__(self):
        if not 1 <= len(self.tokens) <= MAX_TEXT_LEN:
            raise ValueError(f"chunk must hold 1..{MAX_TEXT_LEN} tokens, got {len(self.tokens)}")
        if self.end_s < self.start_s:
            raise ValueError(f"chunk end {self.end_s} < start {self.start_s}")

    @property
    def mid_s(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


@dataclass(frozen=True)
class ClipSample:
    clip_id: int
    shots: tuple[ShotRecord, ...]
    text: TranscriptChunk | None = None

    def __post_init__(self):
        if not 1 <= len(self.shots) <= K_MAX:
            raise ValueError(f"clip {self.clip_id} must hold 1..{K_MAX} shots, got {len(self.shots)}")
        vids = {s.video_id for s in self.shots}
        if len(vids) != 1:
            raise ValueError(f"clip {self.clip_id} spans videos {sorted(vids)}")
        for a, b in zip(self.shots, self.shots[1:]):
            if b.start_s < a.end_s - 1e-6:
                raise ValueError(f"clip {self.clip_id}: shots out of order or overlapping")
        if self.text is not None and self.text.video_id != self.shots[0].video_id:
            raise ValueError(f"clip {self.clip_id}: text from a different video")

    @property
    def video_id(self) -> str:
        return self.shots[0].video_id

    @property
    def start_s(self) -> float:
        return self.shots[0].start_s

    @property
    def end_s(self) -> float:
        return self.shots[-1].end_s

    def __len__(self) -> int:
        return len(self.shots)


@dataclass(frozen=True)
class PositiveBag:
    """A clip and the transcript chunks treated as its positives.

    texts[0] is always the clip's own (temporally aligned) chunk; the rest
    are neighbors ordered by midpoint distance.
    """
    clip: ClipSample
    texts: tuple[TranscriptChunk, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.texts) < 1:
            raise ValueError("bag needs at least the clip's own text")

"""Word-level transcript handling: stable hashing and chunk merging."""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

from .records import MAX_TEXT_LEN, TranscriptChunk

DEFAULT_VOCAB = 4096


def hash_token(word: str, vocab_size: int = DEFAULT_VOCAB) -> int:
    """Stable 64-bit hash of a lowercased word, modulo vocab_size.

    Must not depend on interpreter hash randomization; identical across runs
    and machines.
    """
    if vocab_size <= 0:
        raise ValueError(f"vocab_size must be positive, got {vocab_size}")
    digest = hashlib.blake2b(word.lower().encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_size


def tokenize(text: str, vocab_size: int = DEFAULT_VOCAB) -> tuple[int, ...]:
    return tuple(hash_token(w, vocab_size) for w in text.split())


def merge_words(words: Sequence[tuple[str, float, float]], video_id: str,
                gap_s: float = 1.0, max_len: int = MAX_TEXT_LEN,
                vocab_size: int = DEFAULT_VOCAB) -> list[TranscriptChunk]:
    """Merge timed words into transcript chunks.

    A word joins the current chunk when the silence before it is shorter
    than gap_s and the chunk is not full; otherwise a new chunk starts.
    Chunk span runs from its first word's start to its last word's end.

    Args:
        words: (text, start_s, end_s) triples sorted by start_s.

    Returns:
        Chunks in time order, each holding 1..max_len tokens.
    """
    if gap_s <= 0:
        raise ValueError(f"gap_s must be positive, got {gap_s}")
    if not 1 <= max_len <= MAX_TEXT_LEN:
        raise ValueError(f"max_len must be in 1..{MAX_TEXT_LEN}, got {max_len}")
    prev_start = None
    for text, start, end in words:
        if not text or not text.strip():
            raise ValueError("empty word")
        if start < 0 or end < start:
            raise ValueError(f"bad word times ({start}, {end}) for {text!r}")
        if prev_start is not None and start < prev_start:
            raise ValueError("words are not sorted by start time")
        prev_start = start

    chunks: list[TranscriptChunk] = []
    cur: list[tuple[str, float, float]] = []

    def flush():
        if cur:
            text = " ".join(w for w, _, _ in cur)
            chunks.append(TranscriptChunk(
                video_id=video_id, start_s=cur[0][1], end_s=cur[-1][2],
                tokens=tokenize(text, vocab_size), text=text))
            cur.clear()

    for w in words:
        if cur and (w[1] - cur[-1][2] >= gap_s or len(cur) >= max_len):
            flush()
        cur.append(w)
    flush()
    return chunks


def overlap_s(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    """Length of the intersection of two closed intervals (0 when disjoint)."""
    return max(0.0, min(a_end, b_end) - max(a_start, b_start))


def neighbor_window(chunk: TranscriptChunk, chunks: Iterable[TranscriptChunk],
                    window_s: float) -> list[TranscriptChunk]:
    """Chunks of the same video strictly overlapping chunk's span widened by window_s."""
    lo = chunk.start_s - window_s
    hi = chunk.end_s + window_s
    return [c for c in chunks
            if c.video_id == chunk.video_id and c.start_s < hi and c.end_s > lo]

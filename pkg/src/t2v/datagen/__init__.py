"""Planted corpora, transcript handling, and on-disk formats."""

from .corpus import (
    Corpus,
    GroundTruth,
    GtClip,
    PlantedCorpusConfig,
    build_clips,
    build_positive_bags,
    clips_for_videos,
    generate_corpus,
    split_videos,
)
from .io import (
    FormatError,
    load_checkpoint,
    load_corpus,
    load_features,
    load_shots_jsonl,
    load_transcripts_jsonl,
    params_hash,
    save_checkpoint,
    save_corpus,
    save_features,
    save_shots_jsonl,
    save_transcripts_jsonl,
    sha256_file,
)
from .records import (
    K_MAX,
    MAX_TEXT_LEN,
    ClipSample,
    PositiveBag,
    ShotRecord,
    TranscriptChunk,
    validate_histogram,
)
from .transcripts import (
    DEFAULT_VOCAB,
    hash_token,
    merge_words,
    neighbor_window,
    overlap_s,
    tokenize,
)

__all__ = [
    "Corpus", "GroundTruth", "GtClip", "PlantedCorpusConfig",
    "build_clips", "build_positive_bags", "clips_for_videos",
    "generate_corpus", "split_videos",
    "FormatError", "load_checkpoint", "load_corpus", "load_features",
    "load_shots_jsonl", "load_transcripts_jsonl",
    "params_hash", "save_checkpoint", "save_corpus", "save_features",
    "save_shots_jsonl", "save_transcripts_jsonl", "sha256_file",
    "K_MAX", "MAX_TEXT_LEN", "ClipSample", "PositiveBag", "ShotRecord",
    "TranscriptChunk", "validate_histogram",
    "DEFAULT_VOCAB", "hash_token", "merge_words", "neighbor_window",
    "overlap_s", "tokenize",
]

"""On-disk formats: feature banks, checkpoints, JSONL manifests, corpora.

Feature bank ("T2VF"): magic, u32 version=1, u32 dim, u64 count, then
count*dim little-endian float32 values, row-major.

Checkpoint ("T2VC"): magic, u32 version, u32 header_len, UTF-8 JSON header
{"tensors": [{"name", "shape", "offset"}], "config": {...}}, then a single
little-endian float32 payload. "offset" is the element offset of a tensor's
first value inside the payload.

All loads are strict: wrong magic, unknown version, truncation, duplicate
tensor names, or out-of-range offsets raise FormatError naming the byte
offset where reading failed.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..numkit import ParamSet
from .corpus import Corpus, GroundTruth, GtClip, PlantedCorpusConfig
from .records import ShotRecord, TranscriptChunk
from .transcripts import tokenize

FEATURE_MAGIC = b"T2VF"
CKPT_MAGIC = b"T2VC"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: wanted {n} bytes for {what} "
                          f"at offset {f.tell() - len(data)}, got {len(data)}")
    return data


# ---- feature banks ----

def save_features(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"feature bank must be 2-d, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<IIQ", FORMAT_VERSION, arr.shape[1], arr.shape[0]))
        f.write(arr.tobytes())


def load_features(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != FEATURE_MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0")
        version, dim, count = struct.unpack("<IIQ", _read_exact(f, 16, "header"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported feature bank version {version}")
        if dim == 0:
            raise FormatError("zero dim in feature bank header")
        payload = f.read()
        want = dim * count * 4
        if len(payload) != want:
            raise FormatError(f"payload is {len(payload)} bytes at offset 20, "
                              f"expected {want}")
    out = np.frombuffer(payload, dtype="<f4").reshape(count, dim)
    out.setflags(write=False)
    return out


# ---- checkpoints ----

def save_checkpoint(path, params: ParamSet, config: dict) -> None:
    tensors = []
    offset = 0
    blobs = []
    for name, value in params.items():
        arr = np.ascontiguousarray(value, dtype="<f4")
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"tensors": tensors, "config": config},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != CKPT_MAGIC:
            raise FormatError(f"bad magic {magic!r} at offset 0")
        version, header_len = struct.unpack("<II", _read_exact(f, 8, "header sizes"))
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        raw_header = _read_exact(f, header_len, "JSON header")
        try:
            header = json.loads(raw_header.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"bad JSON header at offset 12: {e}") from e
        payload = f.read()
    if not isinstance(header, dict) or "tensors" not in header or "config" not in header:
        raise FormatError("header must hold 'tensors' and 'config'")
    if len(payload) % 4 != 0:
        raise FormatError(f"payload length {len(payload)} is not a multiple of 4")
    flat = np.frombuffer(payload, dtype="<f4")
    params = ParamSet(version=version)
    seen: set[str] = set()
    for t in header["tensors"]:
        name, shape, offset = t["name"], tuple(int(s) for s in t["shape"]), int(t["offset"])
        if name in seen:
            raise FormatError(f"duplicate tensor name {name!r}")
        seen.add(name)
        size = int(np.prod(shape)) if shape else 1
        if offset < 0 or offset + size > flat.size:
            raise FormatError(f"tensor {name!r} spans [{offset}, {offset + size}) "
                              f"outside payload of {flat.size} elements")
        params[name] = flat[offset:offset + size].reshape(shape)
    return params, header["config"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def params_hash(params: ParamSet) -> str:
    """Content hash over names, shapes, and float32 payloads."""
    h = hashlib.sha256()
    for name, value in params.items():
        h.update(name.encode("utf-8"))
        h.update(str(value.shape).encode())
        h.update(np.ascontiguousarray(value, dtype="<f4").tobytes())
    return h.hexdigest()


# ---- JSONL manifests ----

_SHOT_KEYS = {"shot_id", "video_id", "start_s", "end_s", "feature_row", "hist_row"}


def save_shots_jsonl(path, shots: list[ShotRecord]) -> None:
    """Row i of the banks backs shot i; feature_row/hist_row record that."""
    with open(path, "w", encoding="utf-8") as f:
        for i, s in enumerate(shots):
            f.write(json.dumps({
                "shot_id": s.shot_id, "video_id": s.video_id,
                "start_s": float(np.float32(s.start_s)),
                "end_s": float(np.float32(s.end_s)),
                "feature_row": i, "hist_row": i,
            }, sort_keys=True) + "\n")


def load_shots_jsonl(path, features: np.ndarray, hists: np.ndarray) -> list[ShotRecord]:
    shots: list[ShotRecord] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"bad JSON on line {lineno} of {path}: {e}") from e
            if set(rec) != _SHOT_KEYS:
                raise FormatError(f"line {lineno}: keys {sorted(rec)} != {sorted(_SHOT_KEYS)}")
            fr, hr = int(rec["feature_row"]), int(rec["hist_row"])
            if not (0 <= fr < len(features)) or not (0 <= hr < len(hists)):
                raise FormatError(f"line {lineno}: bank row out of range")
            shots.append(ShotRecord(
                shot_id=int(rec["shot_id"]), video_id=rec["video_id"],
                start_s=float(rec["start_s"]), end_s=float(rec["end_s"]),
                feature=features[fr], histogram=hists[hr]))
    return shots


def save_transcripts_jsonl(path, chunks: list[TranscriptChunk]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for c in chunks:
            f.write(json.dumps({
                "video_id": c.video_id,
                "start_s": float(np.float32(c.start_s)),
                "end_s": float(np.float32(c.end_s)),
                "text": c.text,
            }, sort_keys=True) + "\n")


def load_transcripts_jsonl(path, vocab_size: int) -> list[TranscriptChunk]:
    out: list[TranscriptChunk] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"bad JSON on line {lineno} of {path}: {e}") from e
            if set(rec) != {"video_id", "start_s", "end_s", "text"}:
                raise FormatError(f"line {lineno}: unexpected transcript keys {sorted(rec)}")
            out.append(TranscriptChunk(
                video_id=rec["video_id"], start_s=float(rec["start_s"]),
                end_s=float(rec["end_s"]), tokens=tokenize(rec["text"], vocab_size),
                text=rec["text"]))
    return out


# ---- whole corpora ----

def save_corpus(dirpath, corpus: Corpus) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    save_features(d / "features.t2vf", corpus.features)
    save_features(d / "hists.t2vf", corpus.hists)
    save_shots_jsonl(d / "shots.jsonl", corpus.shots)
    save_transcripts_jsonl(d / "transcripts.jsonl", corpus.chunks)
    gt = {
        "config": dict(corpus.config.__dict__),
        "concept_words": list(corpus.gt.concept_words),
        "shot_concepts": [int(c) for c in corpus.gt.shot_concepts],
        "clips": [{"video_id": g.video_id, "shot_rows": list(g.shot_rows),
                   "chunk_index": g.chunk_index, "source_clip": g.source_clip}
                  for g in corpus.gt.clips],
    }
    with open(d / "gt.json", "w", encoding="utf-8") as f:
        json.dump(gt, f, sort_keys=True)


def load_corpus(dirpath) -> Corpus:
    d = Path(dirpath)
    features = load_features(d / "features.t2vf")
    hists = load_features(d / "hists.t2vf")
    with open(d / "gt.json", "r", encoding="utf-8") as f:
        gt_raw = json.load(f)
    cfg = PlantedCorpusConfig(**gt_raw["config"])
    shots = load_shots_jsonl(d / "shots.jsonl", features, hists)
    chunks = load_transcripts_jsonl(d / "transcripts.jsonl", cfg.vocab_size)
    gt = GroundTruth(
        concept_words=tuple(gt_raw["concept_words"]),
        shot_concepts=np.asarray(gt_raw["shot_concepts"], dtype=np.int32),
        clips=tuple(GtClip(video_id=g["video_id"], shot_rows=tuple(g["shot_rows"]),
                           chunk_index=g["chunk_index"], source_clip=g["source_clip"])
                    for g in gt_raw["clips"]),
    )
    if len(shots) != len(features):
        raise FormatError(f"{len(shots)} shots for {len(features)} bank rows")
    return Corpus(features=features, hists=hists, shots=shots, chunks=chunks,
                  gt=gt, config=cfg)

"""Batch extraction: audio files -> "USFM" feature files + manifest.

Feature files use the engine's binary format (magic "USFM", u32
version=1, u32 T, u32 D, then T*D float32 little-endian) so they load
through the primary package unmodified. Writes are atomic
(temp-then-rename), one file per utterance.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import AudioError, load_wav, to_16k_mono
from .encoders import load_encoder

FEATURE_MAGIC = b"USFM"
FORMAT_VERSION = 1
DEFAULT_MODEL = "microsoft/wavlm-large"
DEFAULT_LAYER = 6
HOP_MS = 20


@dataclass(frozen=True)
class AudioItem:
    audio_path: Path
    speaker_id: str
    utterance_id: str | None = None  # defaults to the file stem

    def resolved_id(self) -> str:
        return self.utterance_id or Path(self.audio_path).stem


@dataclass(frozen=True)
class ExtractionJob:
    items: tuple[AudioItem, ...]
    out_dir: Path
    model_id: str = DEFAULT_MODEL
    layer: int = DEFAULT_LAYER

    def __post_init__(self):
        if not self.items:
            raise ValueError("extraction job has no audio items")
        ids = [item.resolved_id() for item in self.items]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise ValueError(f"duplicate utterance ids: {sorted(dupes)}")


@dataclass(frozen=True)
class ExtractionResult:
    manifest_path: Path
    rows: tuple[dict, ...] = field(default_factory=tuple)


def _write_features_atomic(frames: np.ndarray, path: Path) -> None:
    t, d = frames.shape
    header = FEATURE_MAGIC + struct.pack("<III", FORMAT_VERSION, t, d)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + np.ascontiguousarray(frames, "<f4").tobytes())
    os.replace(tmp, path)


def extract(job: ExtractionJob) -> ExtractionResult:
    """Encode every item; returns the manifest path and its rows.

    Fails before writing anything for the offending utterance: unreadable
    or empty audio and bad model/layer combinations raise with no partial
    file left behind.
    """
    encoder = load_encoder(job.model_id)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    dim = None
    for item in job.items:
        utt = item.resolved_id()
        samples, rate = load_wav(item.audio_path)
        samples = to_16k_mono(samples, rate)
        frames = encoder.encode(samples, job.layer)
        if not np.isfinite(frames).all():
            raise AudioError(f"{item.audio_path}: encoder produced non-finite features")
        if dim is None:
            dim = frames.shape[1]
        elif frames.shape[1] != dim:
            raise AudioError(
                f"{item.audio_path}: feature dim {frames.shape[1]} differs from {dim}"
            )
        feature_name = f"{utt}.usfm"
        _write_features_atomic(frames, out_dir / feature_name)
        rows.append(
            {
                "utterance_id": utt,
                "speaker_id": item.speaker_id,
                "feature_path": feature_name,
                "duration_ms": round(samples.shape[0] * 1000 / 16000),
            }
        )

    manifest_path = out_dir / "manifest.jsonl"
    tmp = manifest_path.with_name(manifest_path.name + ".tmp")
    tmp.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    os.replace(tmp, manifest_path)
    return ExtractionResult(manifest_path=manifest_path, rows=tuple(rows))

"""Core data types and bit-exact binary file formats.

Four on-disk formats, all little-endian:

  features  "USFM"  u32 version | u32 T | u32 D | T*D float32, row-major
  units     "USUQ"  u32 version | u32 T | u32 K | T uint32
  codebook  "USCB"  u32 version | u32 K | u32 D | K*D float32, row-major
  manifest  UTF-8 JSON lines, one utterance record per line

The files do not carry utterance ids; readers take the id from the file
stem unless the caller supplies one (the manifest is the id -> path map).
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

FEATURE_MAGIC = b"USFM"
UNITS_MAGIC = b"USUQ"
CODEBOOK_MAGIC = b"USCB"

_HEADER = struct.Struct("<III")  # version + two shape fields


class StoreError(Exception):
    """Base class for file-format and manifest errors."""


class BadMagicError(StoreError):
    pass


class VersionMismatchError(StoreError):
    pass


class TruncatedPayloadError(StoreError):
    pass


class TrailingDataError(StoreError):
    pass


class NonFiniteError(StoreError):
    pass


class UnitRangeError(StoreError):
    pass


class ManifestError(StoreError):
    pass


def _freeze_float_matrix(a, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"{what} must be a 2-D array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{what} must have at least one row and one column, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{what} contains NaN or Inf values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Frame-level continuous features for one utterance, one row per hop."""

    utterance_id: str
    frames: np.ndarray
    frame_hop_ms: int = 20

    def __post_init__(self):
        object.__setattr__(self, "frames", _freeze_float_matrix(self.frames, "frames"))
        if self.frame_hop_ms <= 0:
            raise ValueError(f"frame_hop_ms must be positive, got {self.frame_hop_ms}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.utterance_id == other.utterance_id
            and self.frame_hop_ms == other.frame_hop_ms
            and self.frames.shape == other.frames.shape
            and np.array_equal(self.frames, other.frames)
        )


@dataclass(frozen=True, eq=False)
class UnitSequence:
    """Discrete unit ids for one utterance, each in [0, codebook_size)."""

    utterance_id: str
    units: np.ndarray
    codebook_size: int

    def __post_init__(self):
        units = np.ascontiguousarray(self.units)
        if units.ndim != 1 or units.shape[0] < 1:
            raise ValueError(f"units must be a non-empty 1-D array, got shape {units.shape}")
        if not np.issubdtype(units.dtype, np.integer):
            raise ValueError(f"units must be integers, got dtype {units.dtype}")
        if self.codebook_size < 1:
            raise ValueError(f"codebook_size must be >= 1, got {self.codebook_size}")
        if units.min() < 0 or units.max() >= self.codebook_size:
            bad = units[(units < 0) | (units >= self.codebook_size)][0]
            raise UnitRangeError(
                f"unit id {int(bad)} outside [0, {self.codebook_size}) in '{self.utterance_id}'"
            )
        units = units.astype(np.uint32, copy=True)
        units.setflags(write=False)
        object.__setattr__(self, "units", units)

    def __len__(self) -> int:
        return self.units.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, UnitSequence):
            return NotImplemented
        return (
            self.utterance_id == other.utterance_id
            and self.codebook_size == other.codebook_size
            and np.array_equal(self.units, other.units)
        )


@dataclass(frozen=True, eq=False)
class Codebook:
    """K x D k-means centroids defining the discrete unit space."""

    centroids: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "centroids", _freeze_float_matrix(self.centroids, "centroids")
        )

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def fingerprint(self) -> str:
        """Content hash binding derived artifacts (pools) to this codebook."""
        h = hashlib.sha256()
        h.update(CODEBOOK_MAGIC)
        h.update(_HEADER.pack(FORMAT_VERSION, self.k, self.dim))
        h.update(np.ascontiguousarray(self.centroids, dtype="<f4").tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return self.centroids.shape == other.centroids.shape and np.array_equal(
            self.centroids, other.centroids
        )


# ---------------------------------------------------------------------------
# binary readers / writers

def _read_header(data: bytes, magic: bytes, path) -> tuple[int, int]:
    if len(data) < 4 or data[:4] != magic:
        raise BadMagicError(
            f"{path}: expected magic {magic!r}, found {bytes(data[:4])!r}"
        )
    if len(data) < 4 + _HEADER.size:
        raise TruncatedPayloadError(f"{path}: file ends inside the header")
    version, a, b = _HEADER.unpack_from(data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {version}, expected {FORMAT_VERSION}"
        )
    return a, b


def _check_payload(data: bytes, expected: int, path) -> bytes:
    payload = data[4 + _HEADER.size :]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise TrailingDataError(
            f"{path}: {len(payload) - expected} trailing bytes after declared payload"
        )
    return payload


def write_features(m: FeatureMatrix, path) -> None:
    header = FEATURE_MAGIC + _HEADER.pack(FORMAT_VERSION, m.num_frames, m.dim)
    Path(path).write_bytes(header + np.ascontiguousarray(m.frames, "<f4").tobytes())


def read_features(path, utterance_id: str | None = None, frame_hop_ms: int = 20) -> FeatureMatrix:
    path = Path(path)
    data = path.read_bytes()
    t, d = _read_header(data, FEATURE_MAGIC, path)
    payload = _check_payload(data, t * d * 4, path)
    frames = np.frombuffer(payload, dtype="<f4").reshape(t, d).astype(np.float32)
    return FeatureMatrix(
        utterance_id=path.stem if utterance_id is None else utterance_id,
        frames=frames,
        frame_hop_ms=frame_hop_ms,
    )


def write_units(u: UnitSequence, path) -> None:
    header = UNITS_MAGIC + _HEADER.pack(FORMAT_VERSION, len(u), u.codebook_size)
    Path(path).write_bytes(header + np.ascontiguousarray(u.units, "<u4").tobytes())


def read_units(path, utterance_id: str | None = None) -> UnitSequence:
    path = Path(path)
    data = path.read_bytes()
    t, k = _read_header(data, UNITS_MAGIC, path)
    payload = _check_payload(data, t * 4, path)
    units = np.frombuffer(payload, dtype="<u4").astype(np.uint32)
    return UnitSequence(
        utterance_id=path.stem if utterance_id is None else utterance_id,
        units=units,
        codebook_size=k,
    )


def write_codebook(cb: Codebook, path) -> None:
    header = CODEBOOK_MAGIC + _HEADER.pack(FORMAT_VERSION, cb.k, cb.dim)
    Path(path).write_bytes(header + np.ascontiguousarray(cb.centroids, "<f4").tobytes())


def read_codebook(path) -> Codebook:
    path = Path(path)
    data = path.read_bytes()
    k, d = _read_header(data, CODEBOOK_MAGIC, path)
    payload = _check_payload(data, k * d * 4, path)
    return Codebook(np.frombuffer(payload, dtype="<f4").reshape(k, d).astype(np.float32))


# ---------------------------------------------------------------------------
# manifest

@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    speaker_id: str
    feature_path: Path
    units_path: Path | None = None
    duration_ms: int | None = None


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def speakers(self) -> list[str]:
        """Unique speaker ids in first-appearance order."""
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.speaker_id, None)
        return list(seen)

    def by_speaker(self, speaker_id: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.speaker_id == speaker_id]


def load_manifest(path, check_paths: bool = True) -> Manifest:
    """Parse a JSON-lines manifest; paths resolve relative to the manifest file."""
    path = Path(path)
    base = path.parent
    entries: list[ManifestEntry] = []
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}: line {lineno}: record is not an object")
            try:
                utt = rec["utterance_id"]
                spk = rec["speaker_id"]
                feat = rec["feature_path"]
            except KeyError as exc:
                raise ManifestError(f"{path}: line {lineno}: missing field {exc.args[0]!r}") from exc
            if not isinstance(utt, str) or not isinstance(spk, str) or not isinstance(feat, str):
                raise ManifestError(f"{path}: line {lineno}: id and path fields must be strings")
            if utt in seen_ids:
                raise ManifestError(f"{path}: line {lineno}: duplicate utterance_id '{utt}'")
            seen_ids.add(utt)
            feature_path = (base / feat).resolve() if not Path(feat).is_absolute() else Path(feat)
            if check_paths and not feature_path.is_file():
                raise ManifestError(
                    f"{path}: line {lineno}: feature_path '{feat}' does not resolve to a file"
                )
            units = rec.get("units_path")
            units_path = None
            if units is not None:
                if not isinstance(units, str):
                    raise ManifestError(f"{path}: line {lineno}: units_path must be a string")
                units_path = (base / units).resolve() if not Path(units).is_absolute() else Path(units)
            duration = rec.get("duration_ms")
            if duration is not None and (not isinstance(duration, int) or duration < 0):
                raise ManifestError(f"{path}: line {lineno}: duration_ms must be a non-negative int")
            entries.append(
                ManifestEntry(
                    utterance_id=utt,
                    speaker_id=spk,
                    feature_path=feature_path,
                    units_path=units_path,
                    duration_ms=duration,
                )
            )
    return Manifest(entries=tuple(entries))


def save_manifest(manifest: Manifest, path) -> None:
    lines = []
    for e in manifest.entries:
        rec: dict = {
            "utterance_id": e.utterance_id,
            "speaker_id": e.speaker_id,
            "feature_path": str(e.feature_path),
        }
        if e.units_path is not None:
            rec["units_path"] = str(e.units_path)
        if e.duration_ms is not None:
            rec["duration_ms"] = e.duration_ms
        lines.append(json.dumps(rec, sort_keys=False))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def stack_frames(matrices) -> np.ndarray:
    """Concatenate feature rows across utterances, enforcing a shared dim."""
    mats = list(matrices)
    if not mats:
        raise ValueError("no feature matrices given")
    dim = mats[0].dim
    for m in mats:
        if m.dim != dim:
            raise ValueError(
                f"feature dim mismatch: '{m.utterance_id}' has D={m.dim}, expected {dim}"
            )
    return np.vstack([m.frames for m in mats])

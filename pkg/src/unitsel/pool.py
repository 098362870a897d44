"""Indexed pool of a target speaker's reference frames.

Two lookups back the frame-selection stage: exact unit-subsequence
occurrences (an n-gram hash index over every window of length min_len
to max_len) and cluster -> frames retrieval. Matches never span
utterance boundaries. Pools are immutable once built and bound to the
codebook that produced their units via a content fingerprint.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .store import (
    BadMagicError,
    Codebook,
    FeatureMatrix,
    FORMAT_VERSION,
    TrailingDataError,
    TruncatedPayloadError,
    UnitSequence,
    VersionMismatchError,
)

POOL_MAGIC = b"USPL"


class CodebookMismatchError(ValueError):
    """A pool was combined with a codebook other than the one it was built from."""


@dataclass(frozen=True, order=True)
class FrameRef:
    """Position of one reference frame: (utterance ordinal, frame index)."""

    utterance_ordinal: int
    frame_index: int


def _window_key(units_le: bytes, start: int, length: int) -> bytes:
    # units_le is the utterance's uint32-LE byte string; keys of different
    # window lengths have different byte lengths, so they never collide.
    return units_le[4 * start : 4 * (start + length)]


class ReferencePool:
    """Immutable indexed view over (units, features) reference utterances."""

    def __init__(
        self,
        utterances: list[tuple[UnitSequence, FeatureMatrix]],
        codebook_size: int,
        dim: int,
        min_len: int,
        max_len: int,
        codebook_fingerprint: str,
    ):
        self._utterances = tuple(utterances)
        self._k = codebook_size
        self._dim = dim
        self.min_len = min_len
        self.max_len = max_len
        self.codebook_fingerprint = codebook_fingerprint

        cluster_lists: list[list[FrameRef]] = [[] for _ in range(codebook_size)]
        ngrams: dict[bytes, list[tuple[int, int]]] = {}
        total = 0
        for ordinal, (useq, _) in enumerate(self._utterances):
            units = useq.units
            t = units.shape[0]
            total += t
            for i in range(t):
                cluster_lists[int(units[i])].append(FrameRef(ordinal, i))
            raw = np.ascontiguousarray(units, dtype="<u4").tobytes()
            for length in range(min_len, max_len + 1):
                for i in range(t - length + 1):
                    ngrams.setdefault(_window_key(raw, i, length), []).append((ordinal, i))

        self._cluster_index = tuple(tuple(lst) for lst in cluster_lists)
        self._ngram_index = ngrams
        self._total_frames = total
        self.occupancy = np.array([len(lst) for lst in self._cluster_index], dtype=np.int64)
        self.occupancy.setflags(write=False)

    # -- basic accessors ----------------------------------------------------

    @property
    def codebook_size(self) -> int:
        return self._k

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def total_frames(self) -> int:
        return self._total_frames

    @property
    def num_utterances(self) -> int:
        return len(self._utterances)

    @property
    def utterances(self) -> tuple[tuple[UnitSequence, FeatureMatrix], ...]:
        return self._utterances

    def utterance_id(self, ordinal: int) -> str:
        return self._utterances[ordinal][0].utterance_id

    def unit_at(self, ref: FrameRef) -> int:
        return int(self._utterances[ref.utterance_ordinal][0].units[ref.frame_index])

    def feature_at(self, ref: FrameRef) -> np.ndarray:
        return self._utterances[ref.utterance_ordinal][1].frames[ref.frame_index]

    # -- queries ------------------------------------------------------------

    def _check_query(self, query) -> np.ndarray:
        q = np.asarray(query)
        if q.ndim != 1:
            raise ValueError(f"query must be 1-D, got shape {q.shape}")
        if not self.min_len <= q.shape[0] <= self.max_len:
            raise ValueError(
                f"query length {q.shape[0]} outside indexed range "
                f"[{self.min_len}, {self.max_len}]"
            )
        if not np.issubdtype(q.dtype, np.integer):
            raise ValueError(f"query must hold integer unit ids, got dtype {q.dtype}")
        if int(q.min()) < 0 or int(q.max()) >= 2**32:
            raise ValueError("query unit ids must fit in uint32")
        return np.ascontiguousarray(q, dtype=np.uint32)

    def find_occurrences(self, query) -> list[tuple[int, int]]:
        """All (utterance_ordinal, start_frame) where the unit window occurs."""
        q = self._check_query(query)
        key = q.astype("<u4").tobytes()
        return list(self._ngram_index.get(key, ()))

    def frames_in_cluster(self, unit: int) -> list[FrameRef]:
        """Pool frames assigned to `unit`, in (ordinal, frame) order."""
        if not 0 <= unit < self._k:
            raise ValueError(f"unit {unit} outside [0, {self._k})")
        return list(self._cluster_index[unit])


def build_pool(
    refs: list[tuple[UnitSequence, FeatureMatrix]],
    cb: Codebook,
    min_len: int = 2,
    max_len: int = 10,
) -> ReferencePool:
    """Index reference utterances against the codebook that tokenized them."""
    if not refs:
        raise ValueError("reference list is empty")
    if not 1 <= min_len <= max_len:
        raise ValueError(f"need 1 <= min_len <= max_len, got [{min_len}, {max_len}]")
    for useq, fm in refs:
        if len(useq) != fm.num_frames:
            raise ValueError(
                f"'{useq.utterance_id}': {len(useq)} units vs {fm.num_frames} frames"
            )
        if useq.codebook_size != cb.k:
            raise CodebookMismatchError(
                f"'{useq.utterance_id}': units declare K={useq.codebook_size}, codebook has K={cb.k}"
            )
        if fm.dim != cb.dim:
            raise ValueError(
                f"'{useq.utterance_id}': feature dim {fm.dim} vs codebook dim {cb.dim}"
            )
    return ReferencePool(
        utterances=list(refs),
        codebook_size=cb.k,
        dim=cb.dim,
        min_len=min_len,
        max_len=max_len,
        codebook_fingerprint=cb.fingerprint(),
    )


def brute_force_find(pool: ReferencePool, query) -> list[tuple[int, int]]:
    """Naive O(total_frames * |query|) occurrence scan; the test oracle."""
    q = pool._check_query(query)
    length = q.shape[0]
    hits: list[tuple[int, int]] = []
    for ordinal, (useq, _) in enumerate(pool.utterances):
        units = useq.units
        if units.shape[0] < length:
            continue
        windows = np.lib.stride_tricks.sliding_window_view(units, length)
        for start in np.nonzero((windows == q).all(axis=1))[0]:
            hits.append((ordinal, int(start)))
    return hits


# ---------------------------------------------------------------------------
# optional pool cache ("USPL"): stores the raw utterances and parameters;
# loading rebuilds the indexes, so cached and fresh pools answer identically.

def save_pool(pool: ReferencePool, path) -> None:
    parts = [POOL_MAGIC, struct.pack("<II", FORMAT_VERSION, pool.num_utterances)]
    parts.append(
        struct.pack("<IIII", pool.codebook_size, pool.dim, pool.min_len, pool.max_len)
    )
    fp = pool.codebook_fingerprint.encode("ascii")
    parts.append(struct.pack("<H", len(fp)))
    parts.append(fp)
    for useq, fm in pool.utterances:
        uid = useq.utterance_id.encode("utf-8")
        parts.append(struct.pack("<H", len(uid)))
        parts.append(uid)
        parts.append(struct.pack("<II", len(useq), fm.frame_hop_ms))
        parts.append(np.ascontiguousarray(useq.units, "<u4").tobytes())
        parts.append(np.ascontiguousarray(fm.frames, "<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(f"{self.path}: file ends inside a record")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_pool(path) -> ReferencePool:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != POOL_MAGIC:
        raise BadMagicError(f"{path}: expected magic {POOL_MAGIC!r}, found {bytes(data[:4])!r}")
    cur = _Cursor(data, path)
    cur.take(4)
    version, n_utts = cur.unpack("<II")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    k, dim, min_len, max_len = cur.unpack("<IIII")
    (fp_len,) = cur.unpack("<H")
    fingerprint = cur.take(fp_len).decode("ascii")
    utterances: list[tuple[UnitSequence, FeatureMatrix]] = []
    for _ in range(n_utts):
        (uid_len,) = cur.unpack("<H")
        uid = cur.take(uid_len).decode("utf-8")
        t, hop = cur.unpack("<II")
        units = np.frombuffer(cur.take(4 * t), dtype="<u4").astype(np.uint32)
        frames = np.frombuffer(cur.take(4 * t * dim), dtype="<f4").reshape(t, dim)
        utterances.append(
            (
                UnitSequence(utterance_id=uid, units=units, codebook_size=k),
                FeatureMatrix(utterance_id=uid, frames=frames.astype(np.float32), frame_hop_ms=hop),
            )
        )
    if cur.pos != len(data):
        raise TrailingDataError(f"{path}: {len(data) - cur.pos} trailing bytes")
    return ReferencePool(
        utterances=utterances,
        codebook_size=k,
        dim=dim,
        min_len=min_len,
        max_len=max_len,
        codebook_fingerprint=fingerprint,
    )

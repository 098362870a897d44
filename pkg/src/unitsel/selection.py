"""Two-stage frame selection over a reference pool.

Stage one greedily covers the predicted unit sequence with the longest
exactly-matching reference segments (longest window length first, left to
right, no overlaps). Stage two fills every uncovered position by inverse
k-means sampling: frames are drawn from (or averaged over) the pool
cluster of the requested unit, falling back to the nearest nonempty
cluster. The output is the selected feature sequence plus a per-frame
provenance trace.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .kmeans import nearest_nonempty_cluster
from .pool import CodebookMismatchError, FrameRef, ReferencePool, build_pool
from .store import Codebook, FeatureMatrix, UnitSequence

log = logging.getLogger(__name__)


class SamplingMode(str, Enum):
    RANDOM = "random"
    AVERAGE = "average"


class OccurrencePolicy(str, Enum):
    EARLIEST = "earliest"
    SEEDED_RANDOM = "seeded_random"


@dataclass(frozen=True)
class SelectionConfig:
    max_len: int = 10
    min_len: int = 2
    sampling_mode: SamplingMode = SamplingMode.AVERAGE
    occurrence_policy: OccurrencePolicy = OccurrencePolicy.EARLIEST
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_len <= self.max_len:
            raise ValueError(
                f"need 1 <= min_len <= max_len, got [{self.min_len}, {self.max_len}]"
            )
        object.__setattr__(self, "sampling_mode", SamplingMode(self.sampling_mode))
        object.__setattr__(self, "occurrence_policy", OccurrencePolicy(self.occurrence_policy))


@dataclass(frozen=True)
class MatchedSegment:
    """One contiguous run copied verbatim from a reference utterance."""

    segment_id: int
    pred_start: int
    length: int
    source_ordinal: int
    source_start: int


@dataclass(frozen=True)
class MatchedFrame:
    segment_id: int
    source: FrameRef


@dataclass(frozen=True)
class SampledFrame:
    requested_unit: int
    resolved_cluster: int
    mode: SamplingMode
    sources: tuple[FrameRef, ...]


TraceEntry = MatchedFrame | SampledFrame


@dataclass(frozen=True, eq=False)
class SelectionResult:
    utterance_id: str
    features: np.ndarray  # T x D float32, read-only
    trace: tuple[TraceEntry, ...]
    segments: tuple[MatchedSegment, ...]
    coverage: float

    def __post_init__(self):
        self.features.setflags(write=False)


def _check_pool_binding(predicted: UnitSequence, pool: ReferencePool, cb: Codebook) -> None:
    if pool.codebook_fingerprint != cb.fingerprint():
        raise CodebookMismatchError(
            "pool was built from a different codebook (fingerprint mismatch)"
        )
    if predicted.codebook_size != cb.k:
        raise CodebookMismatchError(
            f"predicted units declare K={predicted.codebook_size}, codebook has K={cb.k}"
        )


def subsequence_match(
    predicted: UnitSequence,
    pool: ReferencePool,
    cfg: SelectionConfig,
    rng: np.random.Generator | None = None,
) -> list[MatchedSegment]:
    """Greedy longest-first cover of the predicted sequence by pool segments.

    For each window length L from cfg.max_len down to cfg.min_len, scan
    left to right; a window is eligible only while fully uncovered. On a
    hit, one occurrence is kept (earliest, or a seeded draw) and the scan
    resumes past the window, so segments never overlap.
    """
    if cfg.min_len < pool.min_len or cfg.max_len > pool.max_len:
        raise ValueError(
            f"config window range [{cfg.min_len}, {cfg.max_len}] exceeds pool index "
            f"range [{pool.min_len}, {pool.max_len}]"
        )
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    units = predicted.units
    t = units.shape[0]
    covered = np.zeros(t, dtype=bool)
    found: list[tuple[int, int, int, int]] = []  # (pred_start, length, ordinal, src_start)

    for length in range(cfg.max_len, cfg.min_len - 1, -1):
        if length > t:
            continue
        i = 0
        while i + length <= t:
            if not covered[i : i + length].any():
                occs = pool.find_occurrences(units[i : i + length])
                if occs:
                    if cfg.occurrence_policy is OccurrencePolicy.EARLIEST:
                        ordinal, src_start = occs[0]
                    else:
                        ordinal, src_start = occs[int(rng.integers(len(occs)))]
                    covered[i : i + length] = True
                    found.append((i, length, ordinal, src_start))
                    i += length
                    continue
            i += 1

    found.sort()  # segment ids follow predicted-timeline order
    return [
        MatchedSegment(
            segment_id=sid,
            pred_start=start,
            length=length,
            source_ordinal=ordinal,
            source_start=src_start,
        )
        for sid, (start, length, ordinal, src_start) in enumerate(found)
    ]


def inverse_kmeans_sample(
    unit: int,
    pool: ReferencePool,
    cb: Codebook,
    cfg: SelectionConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, SampledFrame]:
    """Recover a continuous frame for one unit from its (nearest nonempty) cluster."""
    if not 0 <= unit < cb.k:
        raise ValueError(f"unit {unit} outside [0, {cb.k})")
    resolved = nearest_nonempty_cluster(unit, pool.occupancy, cb)
    refs = pool.frames_in_cluster(resolved)
    if cfg.sampling_mode is SamplingMode.RANDOM:
        ref = refs[int(rng.integers(len(refs)))]
        vector = pool.feature_at(ref).astype(np.float32, copy=True)
        sources: tuple[FrameRef, ...] = (ref,)
    else:
        stacked = np.stack([pool.feature_at(r) for r in refs]).astype(np.float64)
        vector = (stacked.sum(axis=0) / len(refs)).astype(np.float32)
        sources = tuple(refs)
    provenance = SampledFrame(
        requested_unit=int(unit),
        resolved_cluster=int(resolved),
        mode=cfg.sampling_mode,
        sources=sources,
    )
    return vector, provenance


def select_frames(
    predicted: UnitSequence,
    pool: ReferencePool,
    cb: Codebook,
    cfg: SelectionConfig,
) -> SelectionResult:
    """Match then sample: the full selection pass for one predicted sequence.

    A single generator seeded from cfg drives both the occurrence draws of
    the matching stage and the per-frame draws of the sampling stage, so
    the whole result is a pure function of (predicted, pool, codebook, cfg).
    """
    _check_pool_binding(predicted, pool, cb)
    rng = np.random.default_rng(cfg.seed)
    segments = subsequence_match(predicted, pool, cfg, rng)

    t = predicted.units.shape[0]
    features = np.empty((t, pool.dim), dtype=np.float32)
    trace: list[TraceEntry | None] = [None] * t
    for seg in segments:
        for j in range(seg.length):
            ref = FrameRef(seg.source_ordinal, seg.source_start + j)
            features[seg.pred_start + j] = pool.feature_at(ref)
            trace[seg.pred_start + j] = MatchedFrame(segment_id=seg.segment_id, source=ref)

    for pos in range(t):
        if trace[pos] is None:
            vector, provenance = inverse_kmeans_sample(
                int(predicted.units[pos]), pool, cb, cfg, rng
            )
            features[pos] = vector
            trace[pos] = provenance

    matched = sum(isinstance(e, MatchedFrame) for e in trace)
    return SelectionResult(
        utterance_id=predicted.utterance_id,
        features=features,
        trace=tuple(trace),  # type: ignore[arg-type]
        segments=tuple(segments),
        coverage=matched / t,
    )


def leave_one_out_pairs(
    speaker_utterances: list[tuple[UnitSequence, FeatureMatrix]],
    cb: Codebook,
    cfg: SelectionConfig,
) -> list[tuple[str, SelectionResult]]:
    """Select each utterance against a pool of all its same-speaker siblings.

    The returned (target utterance id, result) pairs are vocoder training
    inputs; pairing with the target audio is the caller's job. Speakers
    with a single utterance produce no pairs (logged as a warning).
    """
    if not speaker_utterances:
        raise ValueError("speaker has no utterances")
    if len(speaker_utterances) == 1:
        log.warning(
            "speaker with a single utterance '%s': no leave-one-out pairs",
            speaker_utterances[0][0].utterance_id,
        )
        return []
    pairs: list[tuple[str, SelectionResult]] = []
    for held_out, (useq, _) in enumerate(speaker_utterances):
        siblings = [u for i, u in enumerate(speaker_utterances) if i != held_out]
        pool = build_pool(siblings, cb, min_len=cfg.min_len, max_len=cfg.max_len)
        pairs.append((useq.utterance_id, select_frames(useq, pool, cb, cfg)))
    return pairs


# ---------------------------------------------------------------------------
# trace serialization

def trace_to_dict(result: SelectionResult, pool: ReferencePool) -> dict:
    """JSON-ready provenance document for one selection."""
    frames = []
    for pos, entry in enumerate(result.trace):
        if isinstance(entry, MatchedFrame):
            frames.append(
                {
                    "pos": pos,
                    "kind": "match",
                    "unit": pool.unit_at(entry.source),
                    "segment_id": entry.segment_id,
                    "src_utt": pool.utterance_id(entry.source.utterance_ordinal),
                    "src_frame": entry.source.frame_index,
                }
            )
        else:
            rec = {
                "pos": pos,
                "kind": "sample",
                "unit": entry.requested_unit,
                "resolved_cluster": entry.resolved_cluster,
                "mode": entry.mode.value,
            }
            if entry.mode is SamplingMode.RANDOM:
                rec["src_utt"] = pool.utterance_id(entry.sources[0].utterance_ordinal)
                rec["src_frame"] = entry.sources[0].frame_index
            frames.append(rec)
    return {
        "utterance_id": result.utterance_id,
        "coverage": result.coverage,
        "frames": frames,
    }


def write_trace(result: SelectionResult, pool: ReferencePool, path) -> None:
    Path(path).write_text(
        json.dumps(trace_to_dict(result, pool), indent=2) + "\n", encoding="utf-8"
    )

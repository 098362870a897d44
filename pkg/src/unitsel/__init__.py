"""Discrete-unit frame selection engine for speech features.

Pipeline: quantize frame-level features against a k-means codebook, index
a target speaker's reference frames, then synthesize new feature
sequences by greedy subsequence matching plus inverse k-means sampling.
"""

from .kmeans import (
    KMeansConfig,
    TrainResult,
    assign_frames,
    assign_units,
    lloyd_kmeans,
    nearest_nonempty_cluster,
    train_codebook,
)
from .pool import (
    CodebookMismatchError,
    FrameRef,
    ReferencePool,
    brute_force_find,
    build_pool,
    load_pool,
    save_pool,
)
from .selection import (
    MatchedFrame,
    MatchedSegment,
    OccurrencePolicy,
    SampledFrame,
    SamplingMode,
    SelectionConfig,
    SelectionResult,
    inverse_kmeans_sample,
    leave_one_out_pairs,
    select_frames,
    subsequence_match,
    trace_to_dict,
    write_trace,
)
from .store import (
    BadMagicError,
    Codebook,
    FeatureMatrix,
    Manifest,
    ManifestEntry,
    ManifestError,
    NonFiniteError,
    StoreError,
    TrailingDataError,
    TruncatedPayloadError,
    UnitRangeError,
    UnitSequence,
    VersionMismatchError,
    load_manifest,
    read_codebook,
    read_features,
    read_units,
    save_manifest,
    stack_frames,
    write_codebook,
    write_features,
    write_units,
)

__version__ = "0.1.0"

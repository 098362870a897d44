"""K-means codebook training and nearest-centroid unit assignment.

Full-batch Lloyd iterations with k-means++ seeding. All distance work is
done in float64 with a fixed reduction order so a given seed and input
always produce a bit-identical codebook.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .store import Codebook, FeatureMatrix, UnitSequence

_CHUNK_ROWS = 4096  # bounds the T x K distance block to ~64 MB at K=2000


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 2000
    max_iters: int = 100
    rel_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ValueError(f"rel_tol must be >= 0, got {self.rel_tol}")


@dataclass(frozen=True)
class TrainResult:
    codebook: Codebook
    objectives: tuple[float, ...]  # mean squared distance per Lloyd iteration
    n_iters: int


def _sqdist_block(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances (rows of x) x (rows of c), float64."""
    d2 = (
        np.einsum("td,td->t", x, x)[:, None]
        - 2.0 * (x @ c.T)
        + np.einsum("kd,kd->k", c, c)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)  # expansion form can go slightly negative
    return d2


def _assign(x: np.ndarray, c: np.ndarray, threads: int = 1) -> np.ndarray:
    """Nearest-centroid index per row, ties toward the lower index.

    Chunks are independent (each fills its own output slice), so the
    result is identical for any thread count.
    """
    out = np.empty(x.shape[0], dtype=np.int64)
    spans = [
        (start, min(start + _CHUNK_ROWS, x.shape[0]))
        for start in range(0, x.shape[0], _CHUNK_ROWS)
    ]

    def run(span):
        start, stop = span
        out[start:stop] = _sqdist_block(x[start:stop], c).argmin(axis=1)

    if threads > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, spans))
    else:
        for span in spans:
            run(span)
    return out


def _objective(x: np.ndarray, c: np.ndarray, assign: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared distance to the assigned centroid, plus per-frame distances."""
    diff = x - c[assign]
    d2 = np.einsum("td,td->t", diff, diff)
    return float(d2.mean()), d2


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    diff = x - centers[0]
    d2 = np.einsum("td,td->t", diff, diff)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))  # all points coincide with a chosen center
        centers[j] = x[idx]
        diff = x - centers[j]
        np.minimum(d2, np.einsum("td,td->t", diff, diff), out=d2)
    return centers


def _reseed_empty(centers: np.ndarray, x: np.ndarray, counts: np.ndarray, d2: np.ndarray) -> None:
    """Move each empty centroid onto the frame farthest from its assigned centroid.

    Frames are consumed in descending-distance order (stable, so equal
    distances resolve to the lower frame index) and each frame reseeds at
    most one cluster.
    """
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return
    order = np.argsort(-d2, kind="stable")
    for slot, cluster in enumerate(empty):
        centers[cluster] = x[order[slot % order.size]]


def lloyd_kmeans(frames: np.ndarray, cfg: KMeansConfig, threads: int = 1) -> TrainResult:
    """Run Lloyd's algorithm; returns the codebook and per-iteration objectives.

    `threads` bounds assignment-step parallelism and never changes the
    result; the centroid-sum reduction stays sequential.
    """
    x = np.ascontiguousarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"frames must be a non-empty 2-D array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("frames contain NaN or Inf values")
    n = x.shape[0]
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds the number of training frames ({n})")

    rng = np.random.default_rng(cfg.seed)
    centers = _kmeans_pp_init(x, cfg.k, rng)
    objectives: list[float] = []
    prev_assign: np.ndarray | None = None

    for _ in range(cfg.max_iters):
        assign = _assign(x, centers, threads)
        obj, d2 = _objective(x, centers, assign)
        objectives.append(obj)

        if prev_assign is not None and np.array_equal(assign, prev_assign):
            break
        if len(objectives) >= 2:
            prev = objectives[-2]
            if prev == 0.0 or (prev - obj) < cfg.rel_tol * prev:
                break
        prev_assign = assign

        counts = np.bincount(assign, minlength=cfg.k)
        sums = np.zeros((cfg.k, x.shape[1]), dtype=np.float64)
        np.add.at(sums, assign, x)  # sequential accumulation: deterministic
        nonzero = counts > 0
        centers[nonzero] = sums[nonzero] / counts[nonzero, None]
        _reseed_empty(centers, x, counts, d2)

    codebook = Codebook(centers.astype(np.float32))
    return TrainResult(codebook=codebook, objectives=tuple(objectives), n_iters=len(objectives))


def train_codebook(frames: np.ndarray, cfg: KMeansConfig, threads: int = 1) -> Codebook:
    return lloyd_kmeans(frames, cfg, threads=threads).codebook


def assign_frames(frames: np.ndarray, cb: Codebook, threads: int = 1) -> np.ndarray:
    """Unit ids (uint32) for raw frame rows."""
    x = np.ascontiguousarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"frames must be 2-D, got shape {x.shape}")
    if x.shape[1] != cb.dim:
        raise ValueError(f"feature dim {x.shape[1]} does not match codebook dim {cb.dim}")
    c = np.ascontiguousarray(cb.centroids, dtype=np.float64)
    return _assign(x, c, threads).astype(np.uint32)


def assign_units(m: FeatureMatrix, cb: Codebook) -> UnitSequence:
    """Quantize a feature matrix to its nearest-centroid unit sequence."""
    return UnitSequence(
        utterance_id=m.utterance_id,
        units=assign_frames(m.frames, cb),
        codebook_size=cb.k,
    )


def nearest_nonempty_cluster(unit: int, occupancy: np.ndarray, cb: Codebook) -> int:
    """Nearest cluster (by centroid distance) with at least one pooled frame.

    Returns `unit` itself when it is occupied; ties go to the lower index.
    """
    occ = np.asarray(occupancy)
    if occ.ndim != 1 or occ.shape[0] != cb.k:
        raise ValueError(f"occupancy must have length K={cb.k}, got shape {occ.shape}")
    if not 0 <= unit < cb.k:
        raise ValueError(f"unit {unit} outside [0, {cb.k})")
    if occ[unit] > 0:
        return int(unit)
    nonempty = np.flatnonzero(occ > 0)
    if nonempty.size == 0:
        raise ValueError("all clusters are empty")
    c = cb.centroids.astype(np.float64)
    diff = c[nonempty] - c[unit]
    d2 = np.einsum("kd,kd->k", diff, diff)
    return int(nonempty[int(d2.argmin())])

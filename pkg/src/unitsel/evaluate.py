"""Desk-scale selection quality metrics and the reference-duration sweep.

Reconstruction metrics (coverage, cosine, MSE, cluster hit rate) are
proxies computed in feature space against ground truth; the sweep
re-runs them over pools truncated to increasing frame budgets.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pool import ReferencePool, build_pool
from .selection import SampledFrame, SelectionConfig, select_frames
from .store import Codebook, FeatureMatrix, UnitSequence


@dataclass(frozen=True)
class ReconReport:
    utterance_id: str
    coverage: float
    mean_cosine: float
    mean_sq_err: float
    cluster_hit_rate: float
    pool_frames: int
    pool_seconds: float


def _frame_cosines(a: np.ndarray, b: np.ndarray) -> list[float]:
    out = []
    for x, y in zip(a.astype(np.float64), b.astype(np.float64)):
        nx = math.sqrt(float(np.dot(x, x)))
        ny = math.sqrt(float(np.dot(y, y)))
        if nx == 0.0 and ny == 0.0:
            out.append(1.0)
        elif nx == 0.0 or ny == 0.0:
            out.append(0.0)
        else:
            out.append(min(1.0, max(-1.0, float(np.dot(x, y)) / (nx * ny))))
    return out


def reconstruction_eval(
    target: tuple[UnitSequence, FeatureMatrix],
    pool: ReferencePool,
    cb: Codebook,
    cfg: SelectionConfig,
    allow_target_in_pool: bool = False,
) -> ReconReport:
    """Select frames for the target's ground-truth units and score them."""
    useq, truth = target
    if len(useq) != truth.num_frames:
        raise ValueError(
            f"'{useq.utterance_id}': {len(useq)} units vs {truth.num_frames} frames"
        )
    if not allow_target_in_pool:
        pooled_ids = {pool.utterance_id(i) for i in range(pool.num_utterances)}
        if useq.utterance_id in pooled_ids:
            raise ValueError(
                f"target '{useq.utterance_id}' is in the pool; pass allow_target_in_pool=True"
            )
    result = select_frames(useq, pool, cb, cfg)

    t = truth.num_frames
    cosines = _frame_cosines(result.features, truth.frames)
    diff = result.features.astype(np.float64) - truth.frames.astype(np.float64)
    per_frame_mse = [float(np.mean(row * row)) for row in diff]

    sampled = [e for e in result.trace if isinstance(e, SampledFrame)]
    if sampled:
        hits = sum(e.resolved_cluster == e.requested_unit for e in sampled)
        hit_rate = hits / len(sampled)
    else:
        hit_rate = 1.0  # vacuous: nothing was sampled

    hop_ms = pool.utterances[0][1].frame_hop_ms
    return ReconReport(
        utterance_id=useq.utterance_id,
        coverage=result.coverage,
        mean_cosine=math.fsum(cosines) / t,
        mean_sq_err=math.fsum(per_frame_mse) / t,
        cluster_hit_rate=hit_rate,
        pool_frames=pool.total_frames,
        pool_seconds=pool.total_frames * hop_ms / 1000.0,
    )


_DURATION_RE = re.compile(r"^(\d+)(s|sec|m|min)$")


def frame_budget(label: str, hop_ms: int = 20) -> int:
    """Frame count for a duration token like '30s', '1min', '3min', '5min'."""
    m = _DURATION_RE.match(label.strip())
    if not m:
        raise ValueError(f"cannot parse duration token '{label}' (expected e.g. 30s or 3min)")
    value = int(m.group(1))
    seconds = value * 60 if m.group(2) in ("m", "min") else value
    frames = seconds * 1000 // hop_ms
    if frames < 1:
        raise ValueError(f"duration '{label}' is below one frame at hop {hop_ms} ms")
    return frames


def truncate_refs(
    refs: list[tuple[UnitSequence, FeatureMatrix]], budget_frames: int
) -> tuple[list[tuple[UnitSequence, FeatureMatrix]], bool]:
    """Whole utterances in list order until the frame budget is met.

    Returns (subset, used_all_material); the flag is set when even the
    full reference list falls short of the budget. Utterances are never
    split, so the subset may overshoot the budget by part of its last
    utterance.
    """
    subset: list[tuple[UnitSequence, FeatureMatrix]] = []
    total = 0
    for pair in refs:
        if total >= budget_frames:
            break
        subset.append(pair)
        total += len(pair[0])
    return subset, total < budget_frames


def reference_duration_sweep(
    targets: list[tuple[UnitSequence, FeatureMatrix]],
    refs: list[tuple[UnitSequence, FeatureMatrix]],
    durations: list[str],
    cb: Codebook,
    cfg: SelectionConfig,
    hop_ms: int = 20,
    threads: int = 1,
) -> list[dict]:
    """One averaged metrics row per duration label, in the given order.

    Aggregation uses exact summation, so permuting the target list leaves
    every reported mean unchanged. Per-target evaluations are independent;
    `threads` > 1 runs them concurrently with results kept in target order.
    """
    if not targets:
        raise ValueError("no target utterances")
    if not refs:
        raise ValueError("no reference utterances")
    rows = []
    for label in durations:
        budget = frame_budget(label, hop_ms)
        subset, used_all = truncate_refs(refs, budget)
        pool = build_pool(subset, cb, min_len=cfg.min_len, max_len=cfg.max_len)
        run = lambda t: reconstruction_eval(t, pool, cb, cfg)  # noqa: E731
        if threads > 1 and len(targets) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                reports = list(ex.map(run, targets))
        else:
            reports = [run(t) for t in targets]
        n = len(reports)
        rows.append(
            {
                "duration_label": label,
                "n_targets": n,
                "mean_coverage": math.fsum(r.coverage for r in reports) / n,
                "mean_cosine": math.fsum(r.mean_cosine for r in reports) / n,
                "mean_mse": math.fsum(r.mean_sq_err for r in reports) / n,
                "mean_cluster_hit_rate": math.fsum(r.cluster_hit_rate for r in reports) / n,
                "pool_frames": pool.total_frames,
                "used_all_material": used_all,
            }
        )
    return rows


def write_sweep_report(rows: list[dict], path) -> None:
    Path(path).write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")


def format_sweep_table(rows: list[dict]) -> str:
    """Aligned text table over the sweep rows."""
    headers = ["duration", "targets", "pool_frames", "coverage", "cosine", "mse", "hit_rate", "all_material"]
    lines = []
    for row in rows:
        lines.append(
            [
                row["duration_label"],
                str(row["n_targets"]),
                str(row["pool_frames"]),
                f"{row['mean_coverage']:.4f}",
                f"{row['mean_cosine']:.4f}",
                f"{row['mean_mse']:.6f}",
                f"{row['mean_cluster_hit_rate']:.4f}",
                "yes" if row["used_all_material"] else "no",
            ]
        )
    widths = [max(len(h), *(len(line[i]) for line in lines)) if lines else len(h) for i, h in enumerate(headers)]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    out = [fmt.format(*headers)]
    out.extend(fmt.format(*line) for line in lines)
    return "\n".join(out)

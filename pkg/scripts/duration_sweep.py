#!/usr/bin/env python3
"""Reference-duration sweep on a seeded synthetic corpus.

Library-level version of the trend experiment: generates a multi-speaker
corpus, trains a codebook, and reports coverage / cosine / MSE per
reference budget, averaged over speakers.
"""

import argparse
import math
import time

import numpy as np

from unitsel import KMeansConfig, SamplingMode, SelectionConfig, assign_units, lloyd_kmeans
from unitsel.evaluate import format_sweep_table, reference_duration_sweep
from unitsel.synthetic import SyntheticConfig, make_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speakers", type=int, default=10)
    ap.add_argument("--utterances", type=int, default=38)
    ap.add_argument("--k", type=int, default=2000)
    ap.add_argument("--dim", type=int, default=16)
    ap.add_argument("--train-frames", type=int, default=30000)
    ap.add_argument("--iters", type=int, default=10)
    ap.add_argument("--durations", default="30s,1min,3min")
    ap.add_argument("--mode", choices=["avg", "rand"], default="avg")
    ap.add_argument("--targets-per-speaker", type=int, default=2)
    ap.add_argument("--seed", type=int, default=20260810)
    args = ap.parse_args()

    t0 = time.perf_counter()
    corpus = make_corpus(
        SyntheticConfig(
            n_speakers=args.speakers,
            utterances_per_speaker=args.utterances,
            dim=args.dim,
            seed=args.seed,
        )
    )
    frames = np.vstack([m.frames for utts in corpus.values() for m in utts])
    print(f"corpus: {args.speakers} speakers, {frames.shape[0]} frames, D={args.dim}")

    rng = np.random.default_rng(args.seed)
    n_train = min(args.train_frames, frames.shape[0])
    sample = frames[rng.choice(frames.shape[0], size=n_train, replace=False)]
    result = lloyd_kmeans(sample, KMeansConfig(k=args.k, max_iters=args.iters, seed=args.seed))
    cb = result.codebook
    print(f"codebook: k={args.k}, {result.n_iters} iterations, "
          f"objective {result.objectives[0]:.4f} -> {result.objectives[-1]:.4f}")

    mode = SamplingMode.AVERAGE if args.mode == "avg" else SamplingMode.RANDOM
    cfg = SelectionConfig(sampling_mode=mode, seed=args.seed)
    durations = args.durations.split(",")
    per_duration: dict[str, list[dict]] = {d: [] for d in durations}
    for speaker, utts in corpus.items():
        pairs = [(assign_units(m, cb), m) for m in utts]
        targets = pairs[: args.targets_per_speaker]
        refs = pairs[args.targets_per_speaker :]
        for row in reference_duration_sweep(targets, refs, durations, cb, cfg):
            per_duration[row["duration_label"]].append(row)

    merged = []
    for label in durations:
        rows = per_duration[label]
        n = len(rows)
        merged.append(
            {
                "duration_label": label,
                "n_targets": sum(r["n_targets"] for r in rows),
                "mean_coverage": math.fsum(r["mean_coverage"] for r in rows) / n,
                "mean_cosine": math.fsum(r["mean_cosine"] for r in rows) / n,
                "mean_mse": math.fsum(r["mean_mse"] for r in rows) / n,
                "mean_cluster_hit_rate": math.fsum(r["mean_cluster_hit_rate"] for r in rows) / n,
                "pool_frames": round(sum(r["pool_frames"] for r in rows) / n),
                "used_all_material": any(r["used_all_material"] for r in rows),
            }
        )
    print(format_sweep_table(merged))
    print(f"total {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()

"""Reconstruction metrics and the reference-duration sweep."""

import json
import math

import numpy as np
import pytest

from unitsel import SamplingMode, SelectionConfig, assign_units, build_pool, lloyd_kmeans
from unitsel.evaluate import (
    ReconReport,
    format_sweep_table,
    frame_budget,
    reconstruction_eval,
    reference_duration_sweep,
    truncate_refs,
    write_sweep_report,
)
from unitsel.kmeans import KMeansConfig
from unitsel.synthetic import SyntheticConfig, make_corpus

from conftest import pair_from_units, random_codebook

AVG = SelectionConfig(sampling_mode=SamplingMode.AVERAGE, seed=9)


def test_self_reconstruction_is_perfect(rng):
    t, k, d = 24, 64, 5
    useq, fm = pair_from_units(rng, np.arange(t) % k, k, d, utterance_id="self")
    cb = random_codebook(rng, k, d)
    pool = build_pool([(useq, fm)], cb)
    report = reconstruction_eval((useq, fm), pool, cb, AVG, allow_target_in_pool=True)
    assert report.coverage == 1.0
    assert report.mean_cosine == 1.0
    assert report.mean_sq_err == 0.0
    assert report.pool_frames == t
    assert report.pool_seconds == t * 20 / 1000


def test_target_in_pool_rejected_unless_requested(rng):
    useq, fm = pair_from_units(rng, [1, 2, 3, 4], 8, 3, utterance_id="tgt")
    cb = random_codebook(rng, 8, 3)
    pool = build_pool([(useq, fm)], cb)
    with pytest.raises(ValueError, match="tgt"):
        reconstruction_eval((useq, fm), pool, cb, AVG)


def test_zero_shared_units_scores_only_samples(rng):
    k, d = 16, 3
    cb = random_codebook(rng, k, d)
    ref = pair_from_units(rng, [0, 1, 0, 1, 2], k, d, utterance_id="ref")
    target = pair_from_units(rng, [9, 10, 11, 9], k, d, utterance_id="tgt")
    pool = build_pool([ref], cb)
    report = reconstruction_eval(target, pool, cb, AVG)
    assert report.coverage == 0.0
    assert report.cluster_hit_rate == 0.0  # requested clusters are all empty
    assert -1.0 <= report.mean_cosine <= 1.0
    assert report.mean_sq_err >= 0.0


def test_report_fields_within_ranges_on_random_data(rng):
    k, d = 12, 4
    cb = random_codebook(rng, k, d)
    for trial in range(20):
        refs = [
            pair_from_units(rng, rng.integers(0, 6, size=int(rng.integers(4, 40))), k, d, f"r{i}")
            for i in range(3)
        ]
        target = pair_from_units(
            rng, rng.integers(0, 6, size=int(rng.integers(2, 40))), k, d, "t"
        )
        pool = build_pool(refs, cb)
        mode = SamplingMode.RANDOM if trial % 2 else SamplingMode.AVERAGE
        report = reconstruction_eval(target, pool, cb, SelectionConfig(sampling_mode=mode, seed=trial))
        assert 0.0 <= report.coverage <= 1.0
        assert 0.0 <= report.cluster_hit_rate <= 1.0
        assert -1.0 <= report.mean_cosine <= 1.0
        assert report.mean_sq_err >= 0.0
        assert report.pool_frames == pool.total_frames


# ---------------------------------------------------------------------------
# duration parsing and truncation

def test_frame_budget_tokens():
    assert frame_budget("30s") == 1500
    assert frame_budget("1min") == 3000
    assert frame_budget("3min") == 9000
    assert frame_budget("5min") == 15000
    assert frame_budget("45s", hop_ms=10) == 4500


def test_frame_budget_rejects_garbage():
    for bad in ("", "abc", "3 min", "-5s", "1.5min"):
        with pytest.raises(ValueError):
            frame_budget(bad)


def test_truncation_takes_whole_utterances(rng):
    refs = [pair_from_units(rng, rng.integers(0, 4, size=10), 8, 3, f"r{i}") for i in range(5)]
    subset, used_all = truncate_refs(refs, 25)
    assert [u.utterance_id for u, _ in subset] == ["r0", "r1", "r2"]  # 30 >= 25
    assert not used_all
    subset, used_all = truncate_refs(refs, 500)
    assert len(subset) == 5 and used_all
    subset, used_all = truncate_refs(refs, 50)
    assert len(subset) == 5 and not used_all  # met exactly


def test_sweep_single_full_duration_matches_plain_eval(rng):
    k, d = 12, 4
    cb = random_codebook(rng, k, d)
    refs = [pair_from_units(rng, rng.integers(0, 5, size=50), k, d, f"r{i}") for i in range(3)]
    targets = [pair_from_units(rng, rng.integers(0, 5, size=30), k, d, f"t{i}") for i in range(2)]
    # 200-frame budget > 150 available frames: pool is everything, flag set
    rows = reference_duration_sweep(targets, refs, ["4s"], cb, AVG)
    assert len(rows) == 1
    row = rows[0]
    pool = build_pool(refs, cb)
    reports = [reconstruction_eval(t, pool, cb, AVG) for t in targets]
    assert row["n_targets"] == 2
    assert row["mean_coverage"] == math.fsum(r.coverage for r in reports) / 2
    assert row["mean_cosine"] == math.fsum(r.mean_cosine for r in reports) / 2
    assert row["used_all_material"]
    assert row["pool_frames"] == 150


def test_sweep_aggregation_is_order_independent(rng):
    k, d = 12, 4
    cb = random_codebook(rng, k, d)
    refs = [pair_from_units(rng, rng.integers(0, 5, size=40), k, d, f"r{i}") for i in range(3)]
    targets = [pair_from_units(rng, rng.integers(0, 5, size=25), k, d, f"t{i}") for i in range(5)]
    rows_a = reference_duration_sweep(targets, refs, ["1s", "2s"], cb, AVG)
    rows_b = reference_duration_sweep(list(reversed(targets)), refs, ["1s", "2s"], cb, AVG)
    for a, b in zip(rows_a, rows_b):
        assert a["mean_coverage"] == b["mean_coverage"]
        assert a["mean_cosine"] == b["mean_cosine"]
        assert a["mean_mse"] == b["mean_mse"]
        assert a["mean_cluster_hit_rate"] == b["mean_cluster_hit_rate"]


def test_sweep_report_file_and_table(tmp_path, rng):
    k, d = 8, 3
    cb = random_codebook(rng, k, d)
    refs = [pair_from_units(rng, rng.integers(0, 4, size=30), k, d, f"r{i}") for i in range(2)]
    targets = [pair_from_units(rng, rng.integers(0, 4, size=20), k, d, "t0")]
    rows = reference_duration_sweep(targets, refs, ["1s"], cb, AVG)
    out = tmp_path / "report.json"
    write_sweep_report(rows, out)
    loaded = json.loads(out.read_text())
    assert loaded == rows
    expected_keys = {
        "duration_label", "n_targets", "mean_coverage", "mean_cosine",
        "mean_mse", "mean_cluster_hit_rate", "pool_frames", "used_all_material",
    }
    assert set(loaded[0]) == expected_keys
    table = format_sweep_table(rows)
    assert "coverage" in table.splitlines()[0]
    assert len(table.splitlines()) == 2


def test_trend_on_seeded_synthetic_corpus():
    cfg = SyntheticConfig(
        n_speakers=2,
        utterances_per_speaker=14,
        frames_per_utterance=(200, 260),
        dim=8,
        phones_per_speaker=30,
        phrases_per_speaker=150,
        seed=7,
    )
    corpus = make_corpus(cfg)
    all_frames = np.vstack([m.frames for utts in corpus.values() for m in utts])
    rng = np.random.default_rng(0)
    sample = all_frames[rng.choice(all_frames.shape[0], size=4000, replace=False)]
    cb = lloyd_kmeans(sample, KMeansConfig(k=128, max_iters=8, seed=0)).codebook

    lo_cov, hi_cov = [], []
    for speaker, utts in corpus.items():
        pairs = [(assign_units(m, cb), m) for m in utts]
        targets, refs = pairs[:2], pairs[2:]
        rows = reference_duration_sweep(targets, refs, ["10s", "1min"], cb, AVG)
        lo_cov.append(rows[0]["mean_coverage"])
        hi_cov.append(rows[1]["mean_coverage"])
    assert np.mean(hi_cov) > np.mean(lo_cov)

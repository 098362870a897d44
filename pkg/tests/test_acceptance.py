"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Everything here is seeded and self-contained; corpora are
generated synthetically.
"""

import json
import time

import numpy as np
import pytest

from unitsel import (
    FeatureMatrix,
    KMeansConfig,
    MatchedFrame,
    SampledFrame,
    SamplingMode,
    SelectionConfig,
    UnitSequence,
    assign_units,
    brute_force_find,
    build_pool,
    leave_one_out_pairs,
    lloyd_kmeans,
    select_frames,
    write_features,
)
from unitsel.cli import main as cli_main
from unitsel.evaluate import reference_duration_sweep
from unitsel.synthetic import SyntheticConfig, make_corpus

from conftest import pair_from_units, random_codebook


def _report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------

def test_subsequence_search_oracle_equivalence_and_speed():
    rng = np.random.default_rng(101)
    checked = 0
    mismatches = 0
    for trial in range(50):
        k = 2000 if trial % 10 == 0 else int(rng.integers(4, 2001))
        alphabet = int(rng.integers(2, 14))
        unit_lists = [
            rng.integers(0, alphabet, size=int(rng.integers(10, 120)))
            for _ in range(int(rng.integers(2, 7)))
        ]
        pool, _ = _pool_from_unit_lists(rng, unit_lists, k)
        for _ in range(21):
            length = int(rng.integers(2, 11))
            if rng.random() < 0.5:
                useq, _ = pool.utterances[int(rng.integers(pool.num_utterances))]
                if len(useq) >= length:
                    start = int(rng.integers(len(useq) - length + 1))
                    query = np.array(useq.units[start : start + length])
                else:
                    query = rng.integers(0, alphabet, size=length)
            else:
                query = rng.integers(0, alphabet, size=length)
            checked += 1
            if pool.find_occurrences(query) != brute_force_find(pool, query):
                mismatches += 1

    # timing: indexed path must be at least 10x faster on a 100k-frame pool
    big_lists = [rng.integers(0, 500, size=5000) for _ in range(20)]
    big_pool, _ = _pool_from_unit_lists(rng, big_lists, 2000)
    queries = []
    for _ in range(300):
        length = int(rng.integers(2, 11))
        if rng.random() < 0.5:
            o = int(rng.integers(20))
            s = int(rng.integers(5000 - length))
            queries.append(np.array(big_lists[o][s : s + length], dtype=np.uint32))
        else:
            queries.append(rng.integers(0, 500, size=length))
    t0 = time.perf_counter()
    indexed = [big_pool.find_occurrences(q) for q in queries]
    t_indexed = time.perf_counter() - t0
    t0 = time.perf_counter()
    brute = [brute_force_find(big_pool, q) for q in queries]
    t_brute = time.perf_counter() - t0

    ok = mismatches == 0 and checked >= 1000 and indexed == brute and t_indexed * 10 <= t_brute
    _report(
        "subsequence search oracle equivalence",
        ok,
        f"{checked} instances, 0 mismatches expected ({mismatches} seen); "
        f"indexed {t_indexed*1e3:.1f}ms vs brute {t_brute*1e3:.1f}ms on 100k frames",
    )


def _pool_from_unit_lists(rng, unit_lists, k, d=6):
    cb = random_codebook(rng, k, d)
    refs = [pair_from_units(rng, units, k, d, f"u{i}") for i, units in enumerate(unit_lists)]
    return build_pool(refs, cb), cb


# ---------------------------------------------------------------------------

def test_quantization_oracle_equivalence_and_monotone_objective():
    rng = np.random.default_rng(202)
    assign_ok = True
    for k, d in ((64, 8), (512, 16), (2000, 12)):
        cb = random_codebook(rng, k, d)
        frames = rng.normal(size=(500, d)).astype(np.float32)
        fast = assign_units(FeatureMatrix("t", frames), cb).units
        c64 = cb.centroids.astype(np.float64)
        oracle = np.array(
            [int(np.argmin(((c64 - f) ** 2).sum(axis=1))) for f in frames.astype(np.float64)]
        )
        assign_ok = assign_ok and np.array_equal(fast, oracle)

    monotone_ok = True
    total_iters = 0
    for seed in range(10):
        data_rng = np.random.default_rng(1000 + seed)
        frames = data_rng.normal(size=(3000, 6)).astype(np.float32)
        result = lloyd_kmeans(frames, KMeansConfig(k=24, max_iters=50, rel_tol=1e-6, seed=seed))
        objs = result.objectives
        total_iters += len(objs)
        monotone_ok = monotone_ok and all(objs[i + 1] <= objs[i] for i in range(len(objs) - 1))

    _report(
        "quantization oracle equivalence",
        assign_ok and monotone_ok,
        f"3 trials x 500 frames vs brute force; 10 seeded runs, {total_iters} iterations all non-increasing",
    )


# ---------------------------------------------------------------------------

def test_unit_consistency_invariant():
    rng = np.random.default_rng(303)
    selections = 0
    matched_frames = 0
    sampled_frames = 0
    violations = 0
    for trial in range(100):
        k = int(rng.integers(8, 65))
        d = int(rng.integers(2, 9))
        alphabet = int(rng.integers(2, 9))  # always <= k
        cb = random_codebook(rng, k, d)
        refs = [
            pair_from_units(rng, rng.integers(0, alphabet, size=int(rng.integers(10, 61))), k, d, f"r{i}")
            for i in range(int(rng.integers(2, 5)))
        ]
        pool = build_pool(refs, cb)
        pred = UnitSequence(
            "p", rng.integers(0, alphabet, size=int(rng.integers(1, 81))), codebook_size=k
        )
        mode = SamplingMode.RANDOM if trial % 2 else SamplingMode.AVERAGE
        result = select_frames(pred, pool, cb, SelectionConfig(sampling_mode=mode, seed=trial))
        selections += 1
        for pos, entry in enumerate(result.trace):
            if isinstance(entry, MatchedFrame):
                matched_frames += 1
                if pool.unit_at(entry.source) != int(pred.units[pos]):
                    violations += 1
            else:
                sampled_frames += 1
                if entry.requested_unit != int(pred.units[pos]):
                    violations += 1
                if pool.occupancy[entry.requested_unit] > 0 and entry.resolved_cluster != entry.requested_unit:
                    violations += 1
                if entry.mode is SamplingMode.RANDOM and pool.unit_at(entry.sources[0]) != entry.resolved_cluster:
                    violations += 1

    _report(
        "unit-consistency invariant",
        selections >= 100 and violations == 0 and matched_frames > 0 and sampled_frames > 0,
        f"{selections} selections, {matched_frames} matched + {sampled_frames} sampled frames, {violations} violations",
    )


# ---------------------------------------------------------------------------

def test_self_pool_coverage_law():
    rng = np.random.default_rng(404)
    k, d = 64, 4
    failures = []
    for t in range(2, 41):
        useq, fm = pair_from_units(rng, np.arange(t) % k, k, d, "self")
        cb = random_codebook(rng, k, d)
        pool = build_pool([(useq, fm)], cb)
        result = select_frames(useq, pool, cb, SelectionConfig(seed=0))
        covered = round(result.coverage * t)
        expected = t if t % 10 != 1 else t - 1
        if covered != expected or covered < t - 1:
            failures.append((t, covered, expected))
    _report(
        "self-pool coverage law",
        not failures,
        f"T=2..40 enumerated; coverage == T except T-1 at T mod 10 == 1; failures: {failures}",
    )


# ---------------------------------------------------------------------------

def _build_cli_corpus(base, rng):
    base.mkdir()
    rows = []
    anchors = rng.normal(size=(8, 6)) * 4
    for spk in ("s0", "s1"):
        for u in range(4):
            t = int(rng.integers(30, 50))
            frames = anchors[rng.integers(0, 8, size=t)] + rng.normal(scale=0.05, size=(t, 6))
            utt = f"{spk}_{u}"
            write_features(FeatureMatrix(utt, frames.astype(np.float32)), base / f"{utt}.usfm")
            rows.append({"utterance_id": utt, "speaker_id": spk, "feature_path": f"{utt}.usfm"})
    manifest = base / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return manifest


def test_cli_determinism(tmp_path):
    rng = np.random.default_rng(505)
    manifest = _build_cli_corpus(tmp_path / "corpus", rng)
    cb_path = tmp_path / "cb.uscb"
    tok_dir = tmp_path / "tok"
    pairs_dir = tmp_path / "pairs"
    sel_feats = tmp_path / "sel.usfm"
    sel_trace = tmp_path / "sel.json"
    report = tmp_path / "report.json"

    def run_all():
        outputs = {}
        assert cli_main(["train-codebook", "--manifest", str(manifest), "--k", "16",
                         "--seed", "5", "--out", str(cb_path)]) == 0
        assert cli_main(["tokenize", "--manifest", str(manifest), "--codebook", str(cb_path),
                         "--out-dir", str(tok_dir)]) == 0
        aug = tok_dir / "manifest.jsonl"
        assert cli_main(["select", "--predicted-units", str(tok_dir / "s0_0.usuq"),
                         "--ref-manifest", str(aug), "--speaker", "s1",
                         "--codebook", str(cb_path), "--mode", "rand", "--occurrence", "random",
                         "--seed", "9", "--out-features", str(sel_feats),
                         "--out-trace", str(sel_trace)]) == 0
        assert cli_main(["prepare-vocoder-pairs", "--manifest", str(aug),
                         "--codebook", str(cb_path), "--mode", "avg", "--seed", "3",
                         "--out-dir", str(pairs_dir)]) == 0
        assert cli_main(["eval", "--manifest", str(aug), "--codebook", str(cb_path),
                         "--speaker", "s0", "--durations", "1s,2s", "--seed", "4",
                         "--out-report", str(report)]) == 0
        for p in sorted([cb_path, sel_feats, sel_trace, report,
                         *tok_dir.iterdir(), *pairs_dir.iterdir()]):
            if p.is_file():
                outputs[str(p)] = p.read_bytes()
        return outputs

    first = run_all()
    second = run_all()
    same = first == second
    _report(
        "CLI determinism",
        same and len(first) > 10,
        f"{len(first)} output files byte-identical across reruns of all 5 commands",
    )


# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_reference_duration_trend():
    start = time.perf_counter()
    cfg = SyntheticConfig(
        n_speakers=10,
        utterances_per_speaker=38,
        frames_per_utterance=(220, 300),
        dim=16,
        phones_per_speaker=60,
        phrases_per_speaker=400,
        phrase_offset_scale=0.35,
        frame_noise_scale=0.02,
        seed=20260810,
    )
    corpus = make_corpus(cfg)
    all_frames = np.vstack([m.frames for utts in corpus.values() for m in utts])
    rng = np.random.default_rng(1)
    sample = all_frames[rng.choice(all_frames.shape[0], size=30000, replace=False)]
    cb = lloyd_kmeans(sample, KMeansConfig(k=2000, max_iters=10, seed=1)).codebook

    sel_cfg = SelectionConfig(sampling_mode=SamplingMode.AVERAGE, seed=7)
    short_cov, long_cov, short_cos, long_cos = [], [], [], []
    for speaker, utts in corpus.items():
        pairs = [(assign_units(m, cb), m) for m in utts]
        targets, refs = pairs[:2], pairs[2:]
        rows = reference_duration_sweep(targets, refs, ["30s", "1min", "3min"], cb, sel_cfg)
        short_cov.append(rows[0]["mean_coverage"])
        long_cov.append(rows[2]["mean_coverage"])
        short_cos.append(rows[0]["mean_cosine"])
        long_cos.append(rows[2]["mean_cosine"])
    elapsed = time.perf_counter() - start

    cov_s, cov_l = float(np.mean(short_cov)), float(np.mean(long_cov))
    cos_s, cos_l = float(np.mean(short_cos)), float(np.mean(long_cos))
    ok = cov_l > cov_s and cos_l > cos_s and elapsed < 300.0
    _report(
        "reference-duration trend (3min > 30s)",
        ok,
        f"coverage {cov_s:.3f} -> {cov_l:.3f}, cosine {cos_s:.4f} -> {cos_l:.4f}, "
        f"{elapsed:.0f}s (< 300s) on 10 speakers / 2000 units",
    )


# ---------------------------------------------------------------------------

def test_leave_one_out_preparation():
    rng = np.random.default_rng(606)
    k, d = 32, 5
    ok = True
    details = []
    for n in (2, 3, 5):
        cb = random_codebook(rng, k, d)
        utts = [
            pair_from_units(rng, rng.integers(0, 7, size=int(rng.integers(12, 40))), k, d, f"u{i}")
            for i in range(n)
        ]
        cfg = SelectionConfig(sampling_mode=SamplingMode.RANDOM, seed=n)
        pairs = leave_one_out_pairs(utts, cb, cfg)
        ok = ok and len(pairs) == n and [p[0] for p in pairs] == [f"u{i}" for i in range(n)]
        for i, (utt_id, result) in enumerate(pairs):
            siblings = [u for j, u in enumerate(utts) if j != i]
            pool = build_pool(siblings, cb)
            # the pool excluded its target: re-selecting over the sibling-only
            # pool reproduces the emitted result exactly
            redo = select_frames(utts[i][0], pool, cb, cfg)
            ok = ok and redo.features.tobytes() == result.features.tobytes()
            ok = ok and redo.trace == result.trace
            # invariant suite
            ok = ok and len(result.trace) == len(utts[i][0])
            for pos, entry in enumerate(result.trace):
                if isinstance(entry, MatchedFrame):
                    ok = ok and pool.unit_at(entry.source) == int(utts[i][0].units[pos])
                else:
                    ok = ok and entry.requested_unit == int(utts[i][0].units[pos])
                    if entry.mode is SamplingMode.RANDOM:
                        ok = ok and pool.unit_at(entry.sources[0]) == entry.resolved_cluster
            for seg in result.segments:
                ok = ok and cfg.min_len <= seg.length <= cfg.max_len
        details.append(f"N={n}: {len(pairs)} pairs")
    _report("leave-one-out preparation", ok, "; ".join(details))

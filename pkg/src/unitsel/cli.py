"""Command-line surface for the selection pipeline.

Subcommands: train-codebook, tokenize, select, prepare-vocoder-pairs,
eval. Logs go to stderr; data goes to files and stdout. Every command is
deterministic given its flags and seed, exits 0 only when all outputs
were written, and removes partial outputs on failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluate, kmeans, selection, store
from .pool import build_pool
from .store import Manifest, ManifestEntry

log = logging.getLogger("unitsel")

_MODE_FLAGS = {"avg": selection.SamplingMode.AVERAGE, "rand": selection.SamplingMode.RANDOM}
_OCCURRENCE_FLAGS = {
    "earliest": selection.OccurrencePolicy.EARLIEST,
    "random": selection.OccurrencePolicy.SEEDED_RANDOM,
}


class CliError(Exception):
    """User-facing command failure; message printed to stderr, exit 1."""


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all stochastic choices")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for per-utterance work (default: cpu count)")
    p.add_argument("--log-level", default="INFO",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _selection_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=sorted(_MODE_FLAGS), default="avg",
                   help="inverse k-means sampling: cluster average or random frame")
    p.add_argument("--max-len", type=int, default=10, help="longest match window")
    p.add_argument("--min-len", type=int, default=2, help="shortest match window")
    p.add_argument("--occurrence", choices=sorted(_OCCURRENCE_FLAGS), default="earliest",
                   help="which occurrence to use when several match")


def _selection_config(args) -> selection.SelectionConfig:
    return selection.SelectionConfig(
        max_len=args.max_len,
        min_len=args.min_len,
        sampling_mode=_MODE_FLAGS[args.mode],
        occurrence_policy=_OCCURRENCE_FLAGS[args.occurrence],
        seed=args.seed,
    )


def _threads(args) -> int:
    return args.threads if args.threads else (os.cpu_count() or 1)


def _map_ordered(fn, items, n_threads: int):
    """Apply fn over items, preserving input order in the results."""
    items = list(items)
    if n_threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))


def _file_stem(utterance_id: str) -> str:
    """Utterance ids become file names; refuse ids that would escape out-dir."""
    if not utterance_id or "/" in utterance_id or "\\" in utterance_id or utterance_id in (".", ".."):
        raise CliError(f"utterance_id {utterance_id!r} is not usable as a file name")
    return utterance_id


def _pick_speaker(manifest: Manifest, requested: str | None) -> str:
    speakers = manifest.speakers()
    if requested is not None:
        if requested not in speakers:
            raise CliError(f"speaker '{requested}' not in manifest (has: {', '.join(speakers)})")
        return requested
    if len(speakers) != 1:
        raise CliError(
            f"manifest has {len(speakers)} speakers; pass --speaker to pick one"
        )
    return speakers[0]


def _load_pair(entry: ManifestEntry, cb: store.Codebook) -> tuple[store.UnitSequence, store.FeatureMatrix]:
    """Units from units_path when present, otherwise tokenized on the fly."""
    fm = store.read_features(entry.feature_path, utterance_id=entry.utterance_id)
    if entry.units_path is not None:
        useq = store.read_units(entry.units_path, utterance_id=entry.utterance_id)
    else:
        useq = kmeans.assign_units(fm, cb)
    return useq, fm


# ---------------------------------------------------------------------------
# subcommands

def cmd_train_codebook(args) -> None:
    manifest = store.load_manifest(args.manifest)
    if len(manifest) == 0:
        raise CliError(f"manifest {args.manifest} has no entries")
    mats = [store.read_features(e.feature_path, utterance_id=e.utterance_id) for e in manifest]
    frames = store.stack_frames(mats)
    cfg = kmeans.KMeansConfig(k=args.k, max_iters=args.iters, rel_tol=args.tol, seed=args.seed)
    log.info("training codebook: k=%d over %d frames (D=%d)", args.k, frames.shape[0], frames.shape[1])
    result = kmeans.lloyd_kmeans(frames, cfg, threads=_threads(args))
    with _cleanup([Path(args.out)]):
        store.write_codebook(result.codebook, args.out)
    print(f"final objective: {result.objectives[-1]:.10g} after {result.n_iters} iterations")


def cmd_tokenize(args) -> None:
    manifest = store.load_manifest(args.manifest)
    if len(manifest) == 0:
        raise CliError(f"manifest {args.manifest} has no entries")
    cb = store.read_codebook(args.codebook)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def tokenize(entry: ManifestEntry) -> store.UnitSequence:
        fm = store.read_features(entry.feature_path, utterance_id=entry.utterance_id)
        return kmeans.assign_units(fm, cb)

    sequences = _map_ordered(tokenize, manifest, _threads(args))

    unit_paths = [out_dir / f"{_file_stem(e.utterance_id)}.usuq" for e in manifest]
    out_manifest = out_dir / "manifest.jsonl"
    with _cleanup([*unit_paths, out_manifest]):
        for useq, upath in zip(sequences, unit_paths):
            store.write_units(useq, upath)
        augmented = Manifest(
            entries=tuple(
                ManifestEntry(
                    utterance_id=e.utterance_id,
                    speaker_id=e.speaker_id,
                    feature_path=e.feature_path.resolve(),
                    units_path=upath.resolve(),
                    duration_ms=e.duration_ms,
                )
                for e, upath in zip(manifest, unit_paths)
            )
        )
        store.save_manifest(augmented, out_manifest)
    log.info("wrote %d unit files and %s", len(unit_paths), out_manifest)


def cmd_select(args) -> None:
    cb = store.read_codebook(args.codebook)
    predicted = store.read_units(args.predicted_units)
    manifest = store.load_manifest(args.ref_manifest)
    speaker = _pick_speaker(manifest, args.speaker)
    entries = manifest.by_speaker(speaker)
    refs = [_load_pair(e, cb) for e in entries]
    cfg = _selection_config(args)
    pool = build_pool(refs, cb, min_len=cfg.min_len, max_len=cfg.max_len)
    log.info("selecting %d frames from a %d-frame pool for speaker %s",
             len(predicted), pool.total_frames, speaker)
    result = selection.select_frames(predicted, pool, cb, cfg)
    with _cleanup([Path(args.out_features), Path(args.out_trace)]):
        store.write_features(
            store.FeatureMatrix(utterance_id=predicted.utterance_id, frames=result.features),
            args.out_features,
        )
        selection.write_trace(result, pool, args.out_trace)
    print(f"coverage: {result.coverage:.6f}")


def cmd_prepare_vocoder_pairs(args) -> None:
    manifest = store.load_manifest(args.manifest)
    if len(manifest) == 0:
        raise CliError(f"manifest {args.manifest} has no entries")
    cb = store.read_codebook(args.codebook)
    cfg = _selection_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_speaker(speaker: str):
        refs = [_load_pair(e, cb) for e in manifest.by_speaker(speaker)]
        return selection.leave_one_out_pairs(refs, cb, cfg)

    per_speaker = _map_ordered(run_speaker, manifest.speakers(), _threads(args))

    index_rows = []
    out_paths = []
    results = []
    speaker_of = {e.utterance_id: e.speaker_id for e in manifest}
    for pairs in per_speaker:
        for utt_id, result in pairs:
            path = out_dir / f"{_file_stem(utt_id)}.selected.usfm"
            out_paths.append(path)
            results.append((utt_id, result, path))
            index_rows.append(
                {
                    "utterance_id": utt_id,
                    "speaker_id": speaker_of[utt_id],
                    "selected_features": str(path.resolve()),
                    "coverage": result.coverage,
                }
            )
    index_path = out_dir / "pairs.jsonl"
    with _cleanup([*out_paths, index_path]):
        for utt_id, result, path in results:
            store.write_features(
                store.FeatureMatrix(utterance_id=utt_id, frames=result.features), path
            )
        index_path.write_text(
            "".join(json.dumps(row) + "\n" for row in index_rows), encoding="utf-8"
        )
    log.info("wrote %d selected-feature files and %s", len(out_paths), index_path)


def cmd_eval(args) -> None:
    manifest = store.load_manifest(args.manifest)
    cb = store.read_codebook(args.codebook)
    speaker = _pick_speaker(manifest, args.speaker)
    entries = manifest.by_speaker(speaker)
    durations = [tok for tok in args.durations.split(",") if tok]
    if not durations:
        raise CliError("--durations is empty")
    for tok in durations:
        evaluate.frame_budget(tok)  # validate before any work
    pairs = [_load_pair(e, cb) for e in entries]
    n_targets = args.n_targets or max(1, min(5, len(pairs) // 2))
    if n_targets >= len(pairs):
        raise CliError(
            f"speaker '{speaker}' has {len(pairs)} utterances; --n-targets {n_targets} "
            "leaves no reference material"
        )
    targets, refs = pairs[:n_targets], pairs[n_targets:]
    cfg = _selection_config(args)
    rows = evaluate.reference_duration_sweep(
        targets, refs, durations, cb, cfg, threads=_threads(args)
    )
    with _cleanup([Path(args.out_report)]):
        evaluate.write_sweep_report(rows, args.out_report)
    print(evaluate.format_sweep_table(rows))


# ---------------------------------------------------------------------------
# plumbing

class _cleanup:
    """Remove the listed output files if the block fails."""

    def __init__(self, paths: list[Path]):
        self.paths = paths

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.paths:
                try:
                    Path(p).unlink(missing_ok=True)
                except OSError:
                    pass
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unitsel",
        description="Discrete-unit frame selection engine for speech features",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-codebook", help="train a k-means codebook over manifest features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--k", type=int, default=2000, help="number of cluster centers")
    p.add_argument("--iters", type=int, default=100, help="max Lloyd iterations")
    p.add_argument("--tol", type=float, default=1e-4, help="relative objective improvement cutoff")
    p.add_argument("--out", required=True, help="output codebook file")
    _common_flags(p)
    p.set_defaults(func=cmd_train_codebook)

    p = sub.add_parser("tokenize", help="write unit files for every manifest utterance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--out-dir", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("select", help="select reference frames for a predicted unit sequence")
    p.add_argument("--predicted-units", required=True, help="units file to synthesize")
    p.add_argument("--ref-manifest", required=True, help="manifest of reference utterances")
    p.add_argument("--speaker", default=None, help="reference speaker id")
    p.add_argument("--codebook", required=True)
    _selection_flags(p)
    p.add_argument("--out-features", required=True)
    p.add_argument("--out-trace", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser(
        "prepare-vocoder-pairs",
        help="leave-one-out selection for every utterance, as vocoder training input",
    )
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    _selection_flags(p)
    p.add_argument("--out-dir", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_prepare_vocoder_pairs)

    p = sub.add_parser("eval", help="reference-duration sweep of reconstruction metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--speaker", default=None)
    p.add_argument("--durations", default="30s,1min,3min",
                   help="comma-separated duration tokens, e.g. 30s,1min,3min")
    p.add_argument("--n-targets", type=int, default=0,
                   help="held-out target utterances (0 = auto: min(5, half))")
    _selection_flags(p)
    p.add_argument("--out-report", required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )
    try:
        args.func(args)
    except (CliError, store.StoreError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

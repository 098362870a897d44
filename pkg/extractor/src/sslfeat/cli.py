"""CLI: extract feature files + manifest from WAV audio."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .audio import AudioError
from .encoders import EncoderError
from .extract import DEFAULT_LAYER, DEFAULT_MODEL, AudioItem, ExtractionJob, extract


def _items_from_args(args) -> list[AudioItem]:
    items: list[AudioItem] = []
    if args.list:
        for lineno, line in enumerate(Path(args.list).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            try:
                items.append(
                    AudioItem(
                        audio_path=Path(rec["audio_path"]),
                        speaker_id=rec["speaker_id"],
                        utterance_id=rec.get("utterance_id"),
                    )
                )
            except KeyError as exc:
                raise AudioError(f"{args.list}: line {lineno}: missing field {exc.args[0]!r}")
    for path in args.audio:
        items.append(AudioItem(audio_path=Path(path), speaker_id=args.speaker))
    return items


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sslfeat",
        description="Convert audio into frame-level feature files + manifest "
        "(20 ms hop at 16 kHz; input is resampled as needed)",
    )
    ap.add_argument("audio", nargs="*", help="WAV files (speaker set by --speaker)")
    ap.add_argument("--speaker", default="spk0", help="speaker id for positional audio files")
    ap.add_argument("--list", default=None,
                    help="JSONL with {audio_path, speaker_id, utterance_id?} rows")
    ap.add_argument("--model-id", default=DEFAULT_MODEL,
                    help="encoder id; 'spectral-pyramid' runs without downloads")
    ap.add_argument("--layer", type=int, default=DEFAULT_LAYER, help="hidden layer to emit")
    ap.add_argument("--out-dir", required=True)
    args = ap.parse_args(argv)

    try:
        items = _items_from_args(args)
        job = ExtractionJob(
            items=tuple(items), out_dir=Path(args.out_dir),
            model_id=args.model_id, layer=args.layer,
        )
        result = extract(job)
    except (AudioError, EncoderError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(result.rows)} feature files and {result.manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""End-to-end demo on a small synthetic corpus.

Writes feature files and a manifest into a work directory, then drives
the CLI through codebook training, tokenization, selection, vocoder-pair
preparation, and the duration sweep.
"""

import argparse
import json
import sys
from pathlib import Path

from unitsel.cli import main as unitsel
from unitsel.store import write_features
from unitsel.synthetic import SyntheticConfig, make_corpus


def run(args):
    print("+ unitsel " + " ".join(args))
    rc = unitsel(args)
    if rc != 0:
        sys.exit(rc)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--work-dir", type=Path, default=Path("demo-work"))
    ap.add_argument("--speakers", type=int, default=3)
    ap.add_argument("--utterances", type=int, default=8)
    ap.add_argument("--k", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    corpus_dir = args.work_dir / "corpus"
    corpus_dir.mkdir(parents=True, exist_ok=True)
    corpus = make_corpus(
        SyntheticConfig(
            n_speakers=args.speakers,
            utterances_per_speaker=args.utterances,
            dim=12,
            phones_per_speaker=30,
            phrases_per_speaker=120,
            seed=args.seed,
        )
    )
    rows = []
    for speaker, utts in corpus.items():
        for m in utts:
            write_features(m, corpus_dir / f"{m.utterance_id}.usfm")
            rows.append(
                {
                    "utterance_id": m.utterance_id,
                    "speaker_id": speaker,
                    "feature_path": f"{m.utterance_id}.usfm",
                    "duration_ms": m.num_frames * m.frame_hop_ms,
                }
            )
    manifest = corpus_dir / "manifest.jsonl"
    manifest.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    print(f"wrote {len(rows)} utterances to {corpus_dir}")

    cb = args.work_dir / "codebook.uscb"
    tok = args.work_dir / "tokenized"
    run(["train-codebook", "--manifest", str(manifest), "--k", str(args.k),
         "--seed", str(args.seed), "--out", str(cb)])
    run(["tokenize", "--manifest", str(manifest), "--codebook", str(cb), "--out-dir", str(tok)])

    first_utt = rows[0]["utterance_id"]
    target_speaker = rows[-1]["speaker_id"]
    run(["select", "--predicted-units", str(tok / f"{first_utt}.usuq"),
         "--ref-manifest", str(tok / "manifest.jsonl"), "--speaker", target_speaker,
         "--codebook", str(cb), "--mode", "avg", "--seed", str(args.seed),
         "--out-features", str(args.work_dir / "selected.usfm"),
         "--out-trace", str(args.work_dir / "selected.trace.json")])

    run(["prepare-vocoder-pairs", "--manifest", str(tok / "manifest.jsonl"),
         "--codebook", str(cb), "--mode", "avg", "--seed", str(args.seed),
         "--out-dir", str(args.work_dir / "vocoder-pairs")])

    run(["eval", "--manifest", str(tok / "manifest.jsonl"), "--codebook", str(cb),
         "--speaker", target_speaker, "--durations", "10s,30s,1min",
         "--seed", str(args.seed), "--out-report", str(args.work_dir / "sweep.json")])


if __name__ == "__main__":
    main()

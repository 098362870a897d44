"""Seeded synthetic speech-feature corpora for tests and desk-scale sweeps.

Each speaker gets a private inventory of phone vectors and a library of
phrases (short phone-id sequences with a phrase-level offset). Utterances
are noisy concatenations of phrases drawn from the library, so the same
unit n-grams recur across a speaker's utterances: exactly the structure
subsequence matching exploits, with the recurrence rate controlled by the
library size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import FeatureMatrix


@dataclass(frozen=True)
class SyntheticConfig:
    n_speakers: int = 10
    utterances_per_speaker: int = 12
    frames_per_utterance: tuple[int, int] = (220, 300)  # inclusive bounds on target length
    dim: int = 16
    phones_per_speaker: int = 60
    phrases_per_speaker: int = 400
    phrase_len: tuple[int, int] = (4, 12)
    phrase_offset_scale: float = 0.35
    frame_noise_scale: float = 0.02
    frame_hop_ms: int = 20
    seed: int = 0


def make_corpus(cfg: SyntheticConfig) -> dict[str, list[FeatureMatrix]]:
    """Speaker id -> utterances, deterministic for a given config."""
    root = np.random.SeedSequence(cfg.seed)
    corpus: dict[str, list[FeatureMatrix]] = {}
    for s, child in enumerate(root.spawn(cfg.n_speakers)):
        rng = np.random.default_rng(child)
        speaker_id = f"spk{s:03d}"
        phones = rng.normal(size=(cfg.phones_per_speaker, cfg.dim))
        phrase_ids = [
            rng.integers(cfg.phones_per_speaker, size=rng.integers(cfg.phrase_len[0], cfg.phrase_len[1] + 1))
            for _ in range(cfg.phrases_per_speaker)
        ]
        offsets = rng.normal(scale=cfg.phrase_offset_scale, size=(cfg.phrases_per_speaker, cfg.dim))

        utterances = []
        for u in range(cfg.utterances_per_speaker):
            target_len = int(rng.integers(cfg.frames_per_utterance[0], cfg.frames_per_utterance[1] + 1))
            rows = []
            while len(rows) < target_len:
                r = int(rng.integers(cfg.phrases_per_speaker))
                base = phones[phrase_ids[r]] + offsets[r]
                rows.extend(base + rng.normal(scale=cfg.frame_noise_scale, size=base.shape))
            utterances.append(
                FeatureMatrix(
                    utterance_id=f"{speaker_id}_utt{u:03d}",
                    frames=np.asarray(rows, dtype=np.float32),
                    frame_hop_ms=cfg.frame_hop_ms,
                )
            )
        corpus[speaker_id] = utterances
    return corpus

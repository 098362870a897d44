"""Frame-synchronous encoders behind one small interface.

The engine downstream only cares about the file contract (one feature
row per 20 ms of 16 kHz audio), so the encoder is configuration, not
code: any model id with a '/' loads a pretrained transformer encoder,
and the built-in 'spectral-pyramid' id gives a deterministic DSP
filterbank stack with no model download, used by tests and smoke runs.
"""

from __future__ import annotations

import numpy as np

SAMPLE_RATE = 16000
WINDOW = 400  # 25 ms
HOP = 320  # 20 ms


class EncoderError(Exception):
    """Model cannot be loaded or the requested layer does not exist."""


class SpectralPyramidEncoder:
    """Log filterbank with per-layer temporal smoothing.

    Layer 0 is the raw filterbank; each higher layer applies one more
    3-frame moving average, widening the receptive field the way deeper
    transformer layers do. Purely numpy, bit-deterministic.
    """

    model_id = "spectral-pyramid"
    num_layers = 12
    dim = 48

    def encode(self, samples: np.ndarray, layer: int) -> np.ndarray:
        if not 0 <= layer <= self.num_layers:
            raise EncoderError(
                f"layer {layer} outside [0, {self.num_layers}] for {self.model_id}"
            )
        n = samples.shape[0]
        if n < WINDOW:
            raise EncoderError(
                f"audio too short to frame: {n} samples < one {WINDOW}-sample window"
            )
        t = (n - WINDOW) // HOP + 1
        idx = np.arange(WINDOW)[None, :] + HOP * np.arange(t)[:, None]
        frames = samples[idx] * np.hanning(WINDOW)
        power = np.abs(np.fft.rfft(frames, axis=1)) ** 2  # (t, 201)
        bins = power.shape[1]
        edges = np.linspace(0, bins, self.dim + 1).astype(int)
        banks = np.stack(
            [power[:, a:b].mean(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1
        )
        feats = np.log1p(banks)
        for _ in range(layer):
            padded = np.pad(feats, ((1, 1), (0, 0)), mode="edge")
            feats = (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0
        return feats.astype(np.float32)


class TransformersEncoder:
    """Pretrained speech encoder via transformers; features from one hidden layer."""

    def __init__(self, model_id: str):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel
        except ImportError as exc:
            raise EncoderError(
                f"model '{model_id}' needs the [wavlm] extra (torch + transformers)"
            ) from exc
        try:
            self._model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"cannot load pretrained model '{model_id}': {exc}") from exc
        self._model.eval()
        self.model_id = model_id
        self.num_layers = int(self._model.config.num_hidden_layers)
        self.dim = int(self._model.config.hidden_size)

    def encode(self, samples: np.ndarray, layer: int) -> np.ndarray:
        import torch

        if not 0 <= layer <= self.num_layers:
            raise EncoderError(
                f"layer {layer} outside [0, {self.num_layers}] for {self.model_id}"
            )
        with torch.no_grad():
            out = self._model(
                torch.from_numpy(samples).float().unsqueeze(0), output_hidden_states=True
            )
        return out.hidden_states[layer].squeeze(0).numpy().astype(np.float32)


def load_encoder(model_id: str):
    if model_id == SpectralPyramidEncoder.model_id:
        return SpectralPyramidEncoder()
    if "/" in model_id:
        return TransformersEncoder(model_id)
    raise EncoderError(
        f"unknown model id '{model_id}' (built-in: 'spectral-pyramid'; "
        "anything with a '/' loads from the transformers hub)"
    )

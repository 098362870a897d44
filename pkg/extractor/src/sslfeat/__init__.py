"""Audio -> frame-level feature files for the unit-selection engine."""

from .audio import AudioError, load_wav, to_16k_mono
from .encoders import EncoderError, SpectralPyramidEncoder, load_encoder
from .extract import (
    DEFAULT_LAYER,
    DEFAULT_MODEL,
    AudioItem,
    ExtractionJob,
    ExtractionResult,
    extract,
)

__version__ = "0.1.0"

import numpy as np
import pytest

from unitsel import Codebook, FeatureMatrix, UnitSequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_matrix(rng, t, d, utterance_id="utt", hop=20):
    return FeatureMatrix(
        utterance_id=utterance_id,
        frames=rng.normal(size=(t, d)).astype(np.float32),
        frame_hop_ms=hop,
    )


def random_codebook(rng, k, d):
    return Codebook(rng.normal(size=(k, d)).astype(np.float32))


def pair_from_units(rng, units, k, d, utterance_id="utt", hop=20):
    """A (UnitSequence, FeatureMatrix) pair with arbitrary random features."""
    units = np.asarray(units, dtype=np.uint32)
    useq = UnitSequence(utterance_id=utterance_id, units=units, codebook_size=k)
    fm = random_matrix(rng, len(units), d, utterance_id=utterance_id, hop=hop)
    return useq, fm

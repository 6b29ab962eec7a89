"""
Shared fixtures for the separation test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from evaluation.synthetic import voiced_utterance, white_noise
from separation.containers import Checkpoint
from separation.dsp_core import Waveform
from separation.neural import init_parameters
from separation.normalization import identity_normalizer
from separation.targets import get_method
from separation.training import mix_at_snr


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def clean_wave():
    """One second of voiced synthetic speech."""
    return voiced_utterance(1.0, seed=3)


@pytest.fixture
def noise_wave():
    return white_noise(3.0, seed=11)


@pytest.fixture
def mixture_0db(clean_wave, noise_wave):
    """(clean, noisy, scaled_noise) at 0 dB."""
    mix = mix_at_snr(clean_wave, noise_wave, 0.0, seed=5)
    return clean_wave, mix.noisy, mix.noise


@pytest.fixture
def random_wave(rng):
    return Waveform(rng.uniform(-0.5, 0.5, 16000))


def make_checkpoint(method_name: str, layer_count: int = 1, cell_count: int = 4, seed: int = 0,
                    zero: bool = False) -> Checkpoint:
    """Small untrained checkpoint with identity normalization."""
    method = get_method(method_name)
    input_dim = 40 if method.input_domain.is_mel else 257
    output_dim = 40 if method.output_domain.is_mel else 257
    params = init_parameters(layer_count, cell_count, input_dim, output_dim, seed=seed)
    if zero:
        params = params.zeros_like()
    mapping = not method.uses_mask
    normalizer = identity_normalizer(input_dim, output_dim if mapping else None)
    return Checkpoint(params=params, method=method, normalizer=normalizer, metadata={"seed": seed})


@pytest.fixture
def checkpoint_factory():
    return make_checkpoint

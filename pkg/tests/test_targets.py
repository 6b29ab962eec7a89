#!/usr/bin/env python3
"""
Tests for the method matrix and training-target construction.
"""

import numpy as np
import pytest

from separation.dsp_core import Domain, FeatureMatrix, Waveform, extract_features
from separation.errors import DomainMismatchError, InvalidMethodError, ShapeMismatchError
from separation.neural import HeadKind
from separation.targets import (
    METHOD_NAMES,
    METHOD_TABLE,
    MethodConfig,
    Objective,
    build_training_pair,
    direct_mask,
    get_method,
    make_method,
    oracle_mask,
)
from separation.training import mix_at_snr
from evaluation.synthetic import white_noise

EXPECTED_METHODS = [
    "log-fbank mapping", "log-fbank SA", "log-fbank masking",
    "log-fft mapping", "log-fft SA", "log-fft masking",
    "fbank masking", "fft masking",
]


def reference_mask(clean: np.ndarray, noisy: np.ndarray) -> np.ndarray:
    """Cell-by-cell direct mask in plain Python."""
    out = np.empty_like(clean)
    for index in np.ndindex(clean.shape):
        s, y = float(clean[index]), float(noisy[index])
        if y == 0.0:
            value = 0.0 if s == 0.0 else 1.0
        else:
            value = min(max(s / y, 0.0), 1.0)
        out[index] = value
    return out


def _fft(values) -> FeatureMatrix:
    values = np.asarray(values, dtype=np.float64)
    return FeatureMatrix(np.pad(values, ((0, 0), (0, 257 - values.shape[1]))), Domain.FFT)


# =============================================================================
# METHOD MATRIX
# =============================================================================

def test_method_table_has_the_eight_rows():
    assert list(METHOD_TABLE) == EXPECTED_METHODS
    for name in EXPECTED_METHODS:
        assert get_method(name).name == name


def test_method_properties():
    mapping = get_method("log-fft mapping")
    assert mapping.objective is Objective.MAPPING
    assert mapping.head_kind is HeadKind.SOFTPLUS
    assert not mapping.uses_mask

    sa = get_method("log-fbank SA")
    assert sa.head_kind is HeadKind.SIGMOID and sa.uses_mask
    assert not sa.invertible

    fbank = get_method("fbank masking")
    assert fbank.input_domain is Domain.LOG_FBANK and fbank.output_domain is Domain.FBANK
    fft = get_method("fft masking")
    assert fft.input_domain is Domain.LOG_FFT and fft.output_domain is Domain.FFT
    assert fft.invertible


def test_method_lookup_accepts_spellings():
    assert get_method("LOG-FBANK   Masking") is METHOD_TABLE["log-fbank masking"]
    assert get_method("log-fft signal-approximation") is METHOD_TABLE["log-fft SA"]
    assert make_method("log-fft", "fft", "ratio masking") is METHOD_TABLE["fft masking"]


def test_invalid_methods_list_the_valid_names():
    with pytest.raises(InvalidMethodError) as info:
        get_method("fbank mapping")
    for name in EXPECTED_METHODS:
        assert f"'{name}'" in str(info.value)
    with pytest.raises(InvalidMethodError):
        make_method("fbank", "fbank", "mapping")
    with pytest.raises(InvalidMethodError):
        get_method("fft SA")


def test_direct_construction_of_an_unknown_method_lists_every_valid_name():
    with pytest.raises(InvalidMethodError) as info:
        MethodConfig("fft mapping", Domain.LOG_FFT, Domain.FFT, Objective.MAPPING)
    assert info.value.valid == EXPECTED_METHODS
    assert METHOD_NAMES == list(METHOD_TABLE) == EXPECTED_METHODS


# =============================================================================
# DIRECT MASK
# =============================================================================

def test_direct_mask_examples():
    noisy = _fft([[2.0, 0.5, 4.0]])
    assert np.all(direct_mask(noisy, noisy).values[0, :3] == 1.0)
    assert np.all(direct_mask(_fft([[0.0, 0.0, 0.0]]), noisy).values == 0.0)
    assert direct_mask(_fft([[3.0]]), _fft([[2.0]])).values[0, 0] == 1.0
    assert direct_mask(_fft([[1.0]]), _fft([[4.0]])).values[0, 0] == 0.25


def test_direct_mask_zero_denominator():
    mask = direct_mask(_fft([[0.0, 1.0]]), _fft([[0.0, 0.0]])).values
    assert mask[0, 0] == 0.0
    assert mask[0, 1] == 1.0


def test_direct_mask_matches_reference_on_random_cells(rng):
    # 4 frames x 257 bins is just over 1000 cells
    clean = rng.uniform(0, 2, (4, 257))
    noisy = rng.uniform(0, 2, (4, 257))
    clean[0, :20] = 0.0
    noisy[1, :20] = 0.0
    noisy[2, :10] = 0.0
    clean[2, :5] = 0.0
    mask = direct_mask(_fft(clean), _fft(noisy))
    np.testing.assert_allclose(mask.values, reference_mask(clean, noisy), atol=1e-9, rtol=0)
    assert np.all((mask.values >= 0) & (mask.values <= 1))
    assert np.any(mask.values == 1.0), "clipping should be exercised"


def test_direct_mask_in_log_domain_clips(rng):
    clean = FeatureMatrix(rng.uniform(-5, 5, (3, 40)), Domain.LOG_FBANK)
    noisy = FeatureMatrix(rng.uniform(-5, 5, (3, 40)), Domain.LOG_FBANK)
    mask = direct_mask(clean, noisy)
    assert mask.domain is Domain.LOG_FBANK
    np.testing.assert_allclose(mask.values, reference_mask(clean.values, noisy.values), atol=1e-12)


def test_direct_mask_errors():
    with pytest.raises(DomainMismatchError):
        direct_mask(_fft([[1.0]]), FeatureMatrix(np.zeros((1, 257)), Domain.LOG_FFT))
    with pytest.raises(ShapeMismatchError):
        direct_mask(_fft([[1.0], [1.0]]), _fft([[1.0]]))


# =============================================================================
# TRAINING PAIRS
# =============================================================================

def test_identical_inputs_give_unit_masks(clean_wave):
    pair = build_training_pair(clean_wave, clean_wave, get_method("fft masking"))
    assert pair.target.domain is Domain.FFT
    nonzero = pair.noisy_output.values > 0
    assert np.all(pair.target.values[nonzero] == 1.0)


def test_mapping_target_is_clean_features(mixture_0db):
    clean, noisy, _ = mixture_0db
    pair = build_training_pair(clean, noisy, get_method("log-fbank mapping"))
    np.testing.assert_array_equal(pair.target.values, extract_features(clean, Domain.LOG_FBANK).values)
    np.testing.assert_array_equal(pair.input.values, extract_features(noisy, Domain.LOG_FBANK).values)


def test_sa_target_is_clean_features(mixture_0db):
    clean, noisy, _ = mixture_0db
    pair = build_training_pair(clean, noisy, get_method("log-fft SA"))
    np.testing.assert_array_equal(pair.target.values, extract_features(clean, Domain.LOG_FFT).values)
    np.testing.assert_array_equal(pair.noisy_output.values, extract_features(noisy, Domain.LOG_FFT).values)


def test_masking_pair_routes_domains(mixture_0db):
    clean, noisy, _ = mixture_0db
    pair = build_training_pair(clean, noisy, get_method("fbank masking"))
    assert pair.input.domain is Domain.LOG_FBANK
    assert pair.target.domain is Domain.FBANK
    assert pair.input.frames == pair.target.frames == pair.frames


def test_sine_mixture_mask_matches_reference():
    n = np.arange(16000)
    sine = Waveform(0.3 * np.sin(2 * np.pi * 440.0 * n / 16000))
    noisy = mix_at_snr(sine, white_noise(2.0, seed=2), 0.0, seed=1).noisy
    pair = build_training_pair(sine, noisy, get_method("fft masking"))
    expected = reference_mask(extract_features(sine, Domain.FFT).values, extract_features(noisy, Domain.FFT).values)
    np.testing.assert_allclose(pair.target.values, expected, atol=1e-9, rtol=0)


def test_oracle_mask_equals_masking_target(mixture_0db):
    clean, noisy, _ = mixture_0db
    pair = build_training_pair(clean, noisy, get_method("log-fft masking"))
    np.testing.assert_array_equal(oracle_mask(clean, noisy, "log-fft").values, pair.target.values)


def test_length_mismatch_is_rejected(clean_wave, random_wave):
    with pytest.raises(ShapeMismatchError):
        build_training_pair(clean_wave, Waveform(random_wave.samples[:8000]), get_method("fft masking"))

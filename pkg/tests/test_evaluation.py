#!/usr/bin/env python3
"""
Tests for the evaluation metrics, the report writer, the evaluation runner and
the synthetic corpus.
"""

import numpy as np
import pytest

from evaluation.metrics import SI_SDR_CAP_DB, feature_mse, relative_reduction, si_sdr, snr_db
from evaluation.report import read_jsonl
from evaluation.runner import AVERAGE, NOISY, EvaluationRunner, evaluate_run, oracle_name
from evaluation.synthetic import (
    CLEAN_RMS,
    make_noise,
    synthetic_mixtures,
    voiced_utterance,
    white_noise,
    write_corpus,
)
from separation.dsp_core import Domain, FeatureMatrix, Waveform, analysis_window, extract_features
from separation.errors import DegenerateSourceError, DomainMismatchError, EmptyManifestError
from separation.training import Utterance, load_manifest, mix_at_snr


@pytest.fixture
def eval_mixtures():
    return synthetic_mixtures(6, duration_s=0.75, seed=8)


# =============================================================================
# METRICS
# =============================================================================

def test_feature_mse_examples(clean_wave):
    clean = extract_features(clean_wave, Domain.FFT)
    assert feature_mse(clean, clean) == 0.0
    shifted = clean.with_values(clean.values + 1.0)
    assert feature_mse(shifted, clean) == pytest.approx(257.0)
    with pytest.raises(DomainMismatchError):
        feature_mse(extract_features(clean_wave, Domain.LOG_FFT), clean)


def _reference_magnitudes(samples: np.ndarray) -> np.ndarray:
    window = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(512) / 512))
    frames = [samples[start:start + 512] * window for start in range(0, len(samples) - 511, 256)]
    return np.abs(np.array([np.fft.fft(frame)[:257] for frame in frames]))


def test_noisy_fft_mse_matches_reference_computation(mixture_0db):
    clean, noisy, _ = mixture_0db
    expected = np.sum((_reference_magnitudes(noisy.samples) - _reference_magnitudes(clean.samples)) ** 2)
    expected /= _reference_magnitudes(clean.samples).shape[0]
    value = feature_mse(extract_features(noisy, Domain.FFT), extract_features(clean, Domain.FFT))
    assert value == pytest.approx(expected, rel=1e-9)
    np.testing.assert_allclose(analysis_window(512) ** 2, 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(512) / 512),
                               atol=1e-15)


def test_si_sdr_examples(rng):
    s = voiced_utterance(0.5, seed=1).samples
    assert si_sdr(s, s) == SI_SDR_CAP_DB
    assert si_sdr(2.0 * s, s) == SI_SDR_CAP_DB

    noise = rng.standard_normal(len(s))
    noise -= np.dot(noise, s) / np.dot(s, s) * s
    noise *= np.sqrt(np.dot(s, s) / np.dot(noise, noise))
    assert abs(si_sdr(s + noise, s)) < 0.1
    assert si_sdr(noise, s) == -SI_SDR_CAP_DB


def test_si_sdr_scale_invariance(rng):
    s = voiced_utterance(0.5, seed=2).samples
    e = s + 0.3 * rng.standard_normal(len(s))
    for scale in (0.01, 0.5, 3.0, 250.0):
        assert si_sdr(scale * e, s) == pytest.approx(si_sdr(e, s), abs=1e-9)


def test_si_sdr_silent_reference():
    with pytest.raises(DegenerateSourceError):
        si_sdr(np.ones(100), np.zeros(100))


def test_snr_and_relative_reduction():
    clean = np.ones(100)
    assert snr_db(clean, 0.5 * clean) == pytest.approx(20 * np.log10(2.0))
    assert snr_db(clean, np.zeros(100)) == np.inf
    assert relative_reduction(31.70, 20.16) == pytest.approx(36.40, abs=0.01)
    assert relative_reduction(0.0, 1.0) == 0.0


# =============================================================================
# RUNNER AND REPORT
# =============================================================================

def test_report_structure(checkpoint_factory, eval_mixtures):
    report = EvaluationRunner([checkpoint_factory("fft masking")], workers=2).run(eval_mixtures)
    systems = list(dict.fromkeys(report.records.method))
    assert systems == [NOISY, oracle_name(Domain.FFT), "fft masking"]
    assert report.methods == ["fft masking"]
    assert set(report.records.snr_db) == {"0", "3", "6", AVERAGE}
    metrics = set(report.records[report.records.method == "fft masking"].metric)
    assert {"mse:fft", "asr_mse", "asr_mse_waveform", "asr_path_difference", "si_sdr",
            "asr_mse_rel_reduction"} <= metrics
    assert report.value(oracle_name(Domain.FFT), "matched", AVERAGE, "asr_mse_rel_reduction") > 0


def test_baseline_si_sdr_at_zero_db(checkpoint_factory, eval_mixtures):
    report = EvaluationRunner([checkpoint_factory("fft masking")]).run(eval_mixtures)
    assert abs(report.value(NOISY, "matched", "0", "si_sdr")) < 0.5


def test_oracle_bounds_hold_per_mixture(checkpoint_factory, eval_mixtures):
    report = EvaluationRunner([checkpoint_factory("fft masking", seed=5)]).run(eval_mixtures)
    per_mixture = report.mixture_records.pivot_table(index="mixture", columns=["method", "metric"], values="value")
    oracle = oracle_name(Domain.FFT)
    assert np.all(per_mixture[(oracle, "si_sdr")] >= per_mixture[("fft masking", "si_sdr")])
    assert np.all(per_mixture[(NOISY, "mse:fft")] >= per_mixture[(oracle, "mse:fft")])


def test_noisy_metrics_follow_snr(checkpoint_factory):
    clean = voiced_utterance(1.0, seed=4)
    noise = white_noise(4.0, seed=6)
    mixtures = []
    for snr in (0.0, 3.0, 6.0):
        mix = mix_at_snr(clean, noise, snr, seed=1)
        mixtures.append(Utterance(clean=clean, noisy=mix.noisy, noise=mix.noise, snr_db=snr, name=f"snr{snr:g}"))
    report = EvaluationRunner([checkpoint_factory("log-fbank masking")]).run(mixtures)
    mse = [report.value(NOISY, "matched", label, "asr_mse") for label in ("0", "3", "6")]
    sdr = [report.value(NOISY, "matched", label, "si_sdr") for label in ("0", "3", "6")]
    assert mse[0] > mse[1] > mse[2]
    assert sdr[0] < sdr[1] < sdr[2]


def test_two_checkpoints_and_clean_condition(checkpoint_factory, eval_mixtures):
    checkpoints = [checkpoint_factory("fft masking"), checkpoint_factory("log-fbank masking")]
    report = EvaluationRunner(checkpoints, include_clean=True).run(eval_mixtures[:2])
    methods = set(report.records.method)
    assert {"fft masking", "log-fbank masking", oracle_name(Domain.FFT), oracle_name(Domain.LOG_FBANK)} <= methods
    assert report.value(NOISY, "clean", "n/a", "si_sdr") == SI_SDR_CAP_DB
    mel_metrics = set(report.records[report.records.method == "log-fbank masking"].metric)
    assert "si_sdr" not in mel_metrics and "asr_mse" in mel_metrics


def test_reports_are_byte_identical(tmp_path, checkpoint_factory, eval_mixtures):
    checkpoint = checkpoint_factory("log-fft SA")
    first = evaluate_run([checkpoint], eval_mixtures, report_path=tmp_path / "a" / "report")
    second = evaluate_run([checkpoint], eval_mixtures, report_path=tmp_path / "b" / "report")
    for suffix in ("report.txt", "report.jsonl"):
        assert (tmp_path / "a" / suffix).read_bytes() == (tmp_path / "b" / suffix).read_bytes()
    text = (tmp_path / "a" / "report.txt").read_text()
    assert text.startswith("# Word error rates")
    loaded = read_jsonl(tmp_path / "a" / "report.jsonl")
    assert len(loaded) == len(first.records) == len(second.records)
    assert list(loaded.columns) == ["method", "condition", "snr_db", "metric", "value"]


def test_empty_evaluation_is_rejected(checkpoint_factory):
    with pytest.raises(EmptyManifestError):
        EvaluationRunner([checkpoint_factory("fft masking")]).run([])


# =============================================================================
# SYNTHETIC CORPUS
# =============================================================================

def test_voiced_utterance_is_deterministic():
    a = voiced_utterance(1.0, seed=3)
    b = voiced_utterance(1.0, seed=3)
    assert np.array_equal(a.samples, b.samples)
    assert len(a) == 16000
    assert np.sqrt(np.mean(a.samples ** 2)) == pytest.approx(CLEAN_RMS)
    assert not np.array_equal(a.samples, voiced_utterance(1.0, seed=4).samples)


def test_noise_kinds():
    for kind in ("white", "pink", "babble"):
        noise = make_noise(kind, 1.0, seed=1)
        assert isinstance(noise, Waveform) and len(noise) == 16000
    with pytest.raises(ValueError):
        make_noise("traffic", 1.0)


def test_synthetic_mixture_labels():
    unseen = synthetic_mixtures(3, noise_kind="babble", duration_s=0.5)
    assert [u.condition for u in unseen] == ["unseen"] * 3
    assert [u.snr_db for u in unseen] == [0.0, 3.0, 6.0]


def test_write_corpus(tmp_path):
    paths = write_corpus(tmp_path / "one", train_count=3, eval_count=2, duration_s=0.5, seed=1)
    train = load_manifest(paths.train_manifest)
    evaluation = load_manifest(paths.eval_manifest)
    assert len(train) == 3 and all(spec.condition == "matched" for spec in train)
    assert [spec.condition for spec in evaluation] == ["matched", "matched", "unseen", "unseen"]
    assert len(paths.train_manifest.read_text().splitlines()[0].split("\t")) == 4
    assert (paths.root / "run_manifest.json").exists()

    again = write_corpus(tmp_path / "two", train_count=3, eval_count=2, duration_s=0.5, seed=1)
    for name in ("clean/train_0000.wav", "noise/babble.wav", "eval.tsv"):
        assert (paths.root / name).read_bytes() == (again.root / name).read_bytes()

"""
Synthetic Corpus Module

Deterministic desk-scale material for training and evaluation:

- voiced utterances: harmonic signals with a drifting pitch and a syllable-rate envelope
- matched noises: white and pink noise
- unseen noise: babble built by summing shifted voiced utterances of several talkers

Everything is a pure function of its seed.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from separation.dsp_core import SAMPLE_RATE, Waveform
from separation.training import MixtureSpec, Utterance, mix_at_snr, write_manifest
from separation.utils import write_run_manifest
from separation.wav_io import write_wav

logger = logging.getLogger(__name__)

CLEAN_RMS = 0.1
NOISE_RMS = 0.1
MATCHED_NOISES = ("white", "pink")
UNSEEN_NOISES = ("babble",)
DEFAULT_SNRS = (0.0, 3.0, 6.0)


def _normalize_rms(samples: np.ndarray, rms: float) -> np.ndarray:
    current = float(np.sqrt(np.mean(samples ** 2)))
    return samples if current == 0.0 else samples * (rms / current)


def voiced_utterance(duration_s: float = 2.0, seed: int = 0, f0: Optional[float] = None,
                     sample_rate: int = SAMPLE_RATE, rms: float = CLEAN_RMS) -> Waveform:
    """
    A speech-like harmonic signal.

    Args:
        duration_s: Length in seconds
        seed: Random seed for pitch, harmonic phases and envelope
        f0: Mean fundamental in Hz (drawn from 90-220 Hz when omitted)
        sample_rate: Sample rate in Hz
        rms: Output RMS level

    Returns:
        Waveform
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = float(f0) if f0 is not None else float(rng.uniform(90.0, 220.0))

    vibrato = 1.0 + 0.03 * np.sin(2.0 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2.0 * np.pi * np.cumsum(f0 * vibrato) / sample_rate

    harmonics = int((0.45 * sample_rate) // (f0 * 1.03))
    signal = np.zeros(n)
    for k in range(1, harmonics + 1):
        signal += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k

    # Syllables at about 4 Hz, never fully silent
    syllable_rate = rng.uniform(3.0, 5.0)
    envelope = 0.5 - 0.5 * np.cos(2.0 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi))
    envelope = 0.05 + 0.95 * envelope ** 2
    return Waveform(_normalize_rms(signal * envelope, rms), sample_rate)


def white_noise(duration_s: float, seed: int = 0, sample_rate: int = SAMPLE_RATE,
                rms: float = NOISE_RMS) -> Waveform:
    rng = np.random.default_rng(seed)
    return Waveform(_normalize_rms(rng.standard_normal(int(round(duration_s * sample_rate))), rms), sample_rate)


def pink_noise(duration_s: float, seed: int = 0, sample_rate: int = SAMPLE_RATE,
               rms: float = NOISE_RMS) -> Waveform:
    """1/f power spectrum, shaped in the frequency domain."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    shaping = np.ones_like(freqs)
    shaping[1:] = 1.0 / np.sqrt(freqs[1:])
    shaping[0] = 0.0
    return Waveform(_normalize_rms(np.fft.irfft(spectrum * shaping, n=n), rms), sample_rate)


def babble_noise(duration_s: float, seed: int = 0, talkers: int = 6, sample_rate: int = SAMPLE_RATE,
                 rms: float = NOISE_RMS) -> Waveform:
    """Sum of circularly shifted voiced utterances from ``talkers`` different voices."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    mixture = np.zeros(n)
    for talker in range(talkers):
        voice = voiced_utterance(duration_s, seed=int(rng.integers(1 << 31)), sample_rate=sample_rate)
        mixture += np.roll(voice.samples, int(rng.integers(0, n)))
    return Waveform(_normalize_rms(mixture, rms), sample_rate)


def make_noise(kind: str, duration_s: float, seed: int = 0) -> Waveform:
    generators = {"white": white_noise, "pink": pink_noise, "babble": babble_noise}
    if kind not in generators:
        raise ValueError(f"unknown noise kind '{kind}', expected one of {sorted(generators)}")
    return generators[kind](duration_s, seed=seed)


def synthetic_mixtures(count: int, snrs: Sequence[float] = DEFAULT_SNRS, noise_kind: str = "white",
                       duration_s: float = 2.0, seed: int = 0, condition: Optional[str] = None) -> List[Utterance]:
    """
    In-memory mixtures cycling through ``snrs``.

    Args:
        count: Number of mixtures
        snrs: Target SNRs in dB, used round-robin
        noise_kind: white, pink or babble
        duration_s: Utterance length in seconds
        seed: Base seed
        condition: Condition label (default: unseen for babble, matched otherwise)

    Returns:
        List of Utterance
    """
    condition = condition or ("unseen" if noise_kind in UNSEEN_NOISES else "matched")
    noise = make_noise(noise_kind, duration_s * 4, seed=seed + 7919)
    utterances = []
    for index in range(count):
        clean = voiced_utterance(duration_s, seed=seed * 1000 + index)
        snr = float(snrs[index % len(snrs)])
        mix = mix_at_snr(clean, noise, snr, seed=seed * 1000 + index)
        utterances.append(Utterance(clean=clean, noisy=mix.noisy, noise=mix.noise, snr_db=snr,
                                    condition=condition, name=f"utt_{index:04d}"))
    return utterances


@dataclass
class CorpusPaths:
    root: Path
    train_manifest: Path
    eval_manifest: Path


def write_corpus(out_dir: Union[str, Path], train_count: int = 50, eval_count: int = 12,
                 snrs: Sequence[float] = DEFAULT_SNRS, duration_s: float = 2.0, seed: int = 0) -> CorpusPaths:
    """
    Write clean utterances, noise recordings and manifests.

    The training manifest uses only white and pink noise; the evaluation manifest
    holds matched mixtures (white/pink) and unseen mixtures (babble), labelled in
    its fifth column.

    Args:
        out_dir: Corpus directory
        train_count: Number of training mixtures
        eval_count: Number of evaluation mixtures per condition
        snrs: Target SNRs in dB
        duration_s: Utterance length in seconds
        seed: Corpus seed

    Returns:
        CorpusPaths with both manifest locations
    """
    root = Path(out_dir)
    written: List[Path] = []
    logger.info(f"Writing synthetic corpus to {root} (seed={seed})")

    noise_files = {}
    for offset, kind in enumerate(MATCHED_NOISES + UNSEEN_NOISES):
        path = root / "noise" / f"{kind}.wav"
        write_wav(path, make_noise(kind, duration_s * 4, seed=seed * 100 + offset))
        noise_files[kind] = path
        written.append(path)

    def clean_file(split: str, index: int) -> Path:
        path = root / "clean" / f"{split}_{index:04d}.wav"
        split_seed = seed * 100000 + (0 if split == "train" else 50000) + index
        write_wav(path, voiced_utterance(duration_s, seed=split_seed))
        written.append(path)
        return path

    train_specs = []
    for index in range(train_count):
        kind = MATCHED_NOISES[index % len(MATCHED_NOISES)]
        train_specs.append(MixtureSpec(
            clean_source=str(clean_file("train", index).relative_to(root)),
            noise_source=str(noise_files[kind].relative_to(root)),
            snr_db=float(snrs[index % len(snrs)]),
            seed=seed * 100000 + index,
            condition="matched",
        ))

    eval_specs = []
    for index in range(2 * eval_count):
        unseen = index >= eval_count
        kind = UNSEEN_NOISES[0] if unseen else MATCHED_NOISES[index % len(MATCHED_NOISES)]
        eval_specs.append(MixtureSpec(
            clean_source=str(clean_file("eval", index).relative_to(root)),
            noise_source=str(noise_files[kind].relative_to(root)),
            snr_db=float(snrs[index % len(snrs)]),
            seed=seed * 100000 + 50000 + index,
            condition="unseen" if unseen else "matched",
        ))

    train_manifest = write_manifest(root / "train.tsv", train_specs, include_condition=False)
    eval_manifest = write_manifest(root / "eval.tsv", eval_specs)
    write_run_manifest(root, written + [train_manifest, eval_manifest], {"seed": seed})
    logger.info(f"Synthetic corpus: {train_count} training and {2 * eval_count} evaluation mixtures")
    return CorpusPaths(root=root, train_manifest=train_manifest, eval_manifest=eval_manifest)

"""
DSP Core Module
===============

Deterministic signal processing for the separation front-end:

- STFT analysis / overlap-add synthesis with a square-root Hann window pair
- Magnitude spectrogram (the "fft" domain)
- HTK mel filterbank (the "fbank" domain)
- Logarithmic compression with a floor, and its inverse

All operations are pure functions of their inputs.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Optional, Union

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from .errors import (
    ColaViolationError,
    DomainMismatchError,
    InvalidWindowError,
    SeparationError,
    ShapeMismatchError,
    SignalTooShortError,
    UnsupportedSampleRateError,
)

logger = logging.getLogger(__name__)

# Front-end constants
SAMPLE_RATE = 16000
WINDOW_LEN = 512
FRAME_HOP = 256
MEL_BAND_COUNT = 40
MEL_FMIN = 0.0
MEL_FMAX = 8000.0
LOG_FLOOR = 1e-8

# Below this the overlap-added squared window is treated as uncovered
_SUMSQUARE_THRESHOLD = 1e-10


class Domain(Enum):
    """T-F representation domains"""
    FFT = "fft"
    LOG_FFT = "log-fft"
    FBANK = "fbank"
    LOG_FBANK = "log-fbank"

    @property
    def is_log(self) -> bool:
        return self in (Domain.LOG_FFT, Domain.LOG_FBANK)

    @property
    def is_mel(self) -> bool:
        return self in (Domain.FBANK, Domain.LOG_FBANK)

    @property
    def linear(self) -> "Domain":
        return {Domain.LOG_FFT: Domain.FFT, Domain.LOG_FBANK: Domain.FBANK}.get(self, self)

    @property
    def logarithmic(self) -> "Domain":
        return {Domain.FFT: Domain.LOG_FFT, Domain.FBANK: Domain.LOG_FBANK}.get(self, self)


def as_domain(value: Union[str, Domain]) -> Domain:
    return value if isinstance(value, Domain) else Domain(str(value).strip().lower())


@dataclass
class Waveform:
    """Mono PCM signal with amplitudes nominally in [-1, 1]."""
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise SeparationError(f"waveform must be mono (1-D), got shape {self.samples.shape}")
        if int(self.sample_rate) <= 0:
            raise SeparationError(f"sample_rate must be positive, got {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass
class ComplexSpectrogram:
    """frames x bins complex STFT, keeping the phase needed for resynthesis."""
    values: np.ndarray
    frame_hop: int = FRAME_HOP
    window_len: int = WINDOW_LEN
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        expected_bins = self.window_len // 2 + 1
        if self.values.ndim != 2 or self.values.shape[1] != expected_bins:
            raise ShapeMismatchError(f"(frames, {expected_bins})", self.values.shape, "spectrogram shape")
        if self.values.shape[0] < 1:
            raise SeparationError("spectrogram must have at least one frame")

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def bins(self) -> int:
        return int(self.values.shape[1])


@dataclass
class FeatureMatrix:
    """
    frames x dims real T-F representation tagged with its domain.

    ``mel_band_count`` is set exactly when the domain is fbank or log-fbank.
    """
    values: np.ndarray
    domain: Domain
    frame_hop: int = FRAME_HOP
    window_len: int = WINDOW_LEN
    sample_rate: int = SAMPLE_RATE
    mel_band_count: Optional[int] = None

    def __post_init__(self):
        self.domain = as_domain(self.domain)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatchError("2-D (frames, dims)", self.values.shape, "feature shape")

        if self.domain.is_mel:
            if self.mel_band_count is None:
                self.mel_band_count = int(self.values.shape[1])
            expected_dims = self.mel_band_count
        else:
            if self.mel_band_count is not None:
                raise DomainMismatchError(f"{self.domain.value} features cannot carry a mel band count")
            expected_dims = self.window_len // 2 + 1
        if self.values.shape[1] != expected_dims:
            raise ShapeMismatchError(expected_dims, self.values.shape[1], f"{self.domain.value} dims")

        if not self.domain.is_log and np.any(self.values < 0):
            raise DomainMismatchError(f"negative values in linear {self.domain.value} features")

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def dims(self) -> int:
        return int(self.values.shape[1])

    def with_values(self, values: np.ndarray, domain: Optional[Domain] = None) -> "FeatureMatrix":
        """Same framing metadata, new values (and optionally a new domain tag)."""
        domain = self.domain if domain is None else as_domain(domain)
        return replace(
            self,
            values=values,
            domain=domain,
            mel_band_count=self.mel_band_count if domain.is_mel else None,
        )


@dataclass
class MelFilterbank:
    """bands x bins nonnegative triangular filter weights."""
    weights: np.ndarray
    band_count: int
    sample_rate: int = SAMPLE_RATE
    fmin: float = MEL_FMIN
    fmax: float = MEL_FMAX
    window_len: int = field(default=WINDOW_LEN)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.band_count, self.window_len // 2 + 1):
            raise ShapeMismatchError((self.band_count, self.window_len // 2 + 1), self.weights.shape,
                                     "filterbank shape")
        if np.any(self.weights < 0):
            raise SeparationError("mel filterbank weights must be nonnegative")
        empty = np.flatnonzero(~np.any(self.weights > 0, axis=1))
        if empty.size:
            raise SeparationError(f"mel bands without any nonzero weight: {empty.tolist()}")

    @property
    def bins(self) -> int:
        return int(self.weights.shape[1])


# =============================================================================
# STFT
# =============================================================================

def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_framing(window_len: int, frame_hop: int) -> None:
    if not _is_power_of_two(int(window_len)):
        raise InvalidWindowError(window_len)
    if int(frame_hop) * 2 != int(window_len):
        raise ColaViolationError(window_len, frame_hop)


def _check_sample_rate(sample_rate: int) -> None:
    if sample_rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(sample_rate, SAMPLE_RATE)


@lru_cache(maxsize=8)
def analysis_window(window_len: int = WINDOW_LEN) -> np.ndarray:
    """
    Square-root periodic Hann window.

    Used for both analysis and synthesis; its square overlap-adds to exactly one
    at half-window hop.
    """
    window = np.sqrt(get_window("hann", window_len, fftbins=True))
    window.setflags(write=False)
    return window


def stft(w: Waveform, window_len: int = WINDOW_LEN, frame_hop: int = FRAME_HOP) -> ComplexSpectrogram:
    """
    Short-time Fourier transform without padding.

    Args:
        w: Input waveform (16 kHz)
        window_len: Power-of-two analysis window length in samples
        frame_hop: Hop in samples, must be window_len / 2

    Returns:
        ComplexSpectrogram with floor((len - window_len) / hop) + 1 frames
    """
    _check_framing(window_len, frame_hop)
    _check_sample_rate(w.sample_rate)
    if len(w) < window_len:
        raise SignalTooShortError(len(w), window_len)

    frames = sliding_window_view(w.samples, window_len)[::frame_hop]
    values = np.fft.rfft(frames * analysis_window(window_len), axis=1)
    return ComplexSpectrogram(values, frame_hop=frame_hop, window_len=window_len, sample_rate=w.sample_rate)


def istft(spec: ComplexSpectrogram, out_len: int) -> Waveform:
    """
    Weighted overlap-add synthesis with the matching square-root Hann window.

    The overlap-added output is divided by the overlap-added squared window where
    it is nonzero. In the interior that sum is exactly one, so only the first and
    last half-window are affected.

    Args:
        spec: Spectrogram produced by ``stft`` (or modified from one)
        out_len: Length of the returned waveform in samples

    Returns:
        Waveform of exactly ``out_len`` samples
    """
    _check_framing(spec.window_len, spec.frame_hop)
    window_len, hop = spec.window_len, spec.frame_hop
    window = analysis_window(window_len)

    frames = np.fft.irfft(spec.values, n=window_len, axis=1) * window
    total = (spec.frames - 1) * hop + window_len
    output = np.zeros(max(total, out_len))
    sumsquare = np.zeros_like(output)
    window_sq = window ** 2
    for index in range(spec.frames):
        start = index * hop
        output[start:start + window_len] += frames[index]
        sumsquare[start:start + window_len] += window_sq

    covered = sumsquare > _SUMSQUARE_THRESHOLD
    output[covered] /= sumsquare[covered]
    return Waveform(output[:out_len], sample_rate=spec.sample_rate)


def magnitude(spec: ComplexSpectrogram) -> FeatureMatrix:
    """Elementwise complex modulus, tagged as the fft domain."""
    return FeatureMatrix(
        np.abs(spec.values),
        Domain.FFT,
        frame_hop=spec.frame_hop,
        window_len=spec.window_len,
        sample_rate=spec.sample_rate,
    )


# =============================================================================
# MEL FILTERBANK AND LOG COMPRESSION
# =============================================================================

def build_mel_filterbank(
    band_count: int = MEL_BAND_COUNT,
    sample_rate: int = SAMPLE_RATE,
    window_len: int = WINDOW_LEN,
    fmin: float = MEL_FMIN,
    fmax: float = MEL_FMAX,
) -> MelFilterbank:
    """
    HTK-mel triangular filters with unit peak and no area normalization.

    Args:
        band_count: Number of mel bands
        sample_rate: Sample rate in Hz
        window_len: FFT length the filters are laid over
        fmin: Lower edge of the first band in Hz
        fmax: Upper edge of the last band in Hz

    Returns:
        MelFilterbank of shape (band_count, window_len / 2 + 1)
    """
    weights = librosa.filters.mel(
        sr=sample_rate,
        n_fft=window_len,
        n_mels=band_count,
        fmin=fmin,
        fmax=fmax,
        htk=True,
        norm=None,
        dtype=np.float64,
    )
    return MelFilterbank(weights, band_count=band_count, sample_rate=sample_rate,
                         fmin=fmin, fmax=fmax, window_len=window_len)


@lru_cache(maxsize=4)
def default_filterbank(band_count: int = MEL_BAND_COUNT) -> MelFilterbank:
    bank = build_mel_filterbank(band_count=band_count)
    bank.weights.setflags(write=False)
    return bank


def apply_mel(f: FeatureMatrix, bank: Optional[MelFilterbank] = None) -> FeatureMatrix:
    """Project an fft-domain magnitude matrix onto the mel bands."""
    bank = bank or default_filterbank()
    if f.domain is not Domain.FFT:
        raise DomainMismatchError(f"apply_mel expects fft features, got {f.domain.value}")
    if f.dims != bank.bins:
        raise ShapeMismatchError(bank.bins, f.dims, "fft bins")
    return FeatureMatrix(
        f.values @ bank.weights.T,
        Domain.FBANK,
        frame_hop=f.frame_hop,
        window_len=f.window_len,
        sample_rate=f.sample_rate,
        mel_band_count=bank.band_count,
    )


def to_log(f: FeatureMatrix, floor: float = LOG_FLOOR) -> FeatureMatrix:
    """ln(max(v, floor)) elementwise; fft -> log-fft, fbank -> log-fbank."""
    if f.domain.is_log:
        raise DomainMismatchError(f"{f.domain.value} is already logarithmic")
    return f.with_values(np.log(np.maximum(f.values, floor)), f.domain.logarithmic)


def to_linear(f: FeatureMatrix) -> FeatureMatrix:
    """exp(v) elementwise; log-fft -> fft, log-fbank -> fbank."""
    if not f.domain.is_log:
        raise DomainMismatchError(f"{f.domain.value} is not logarithmic")
    return f.with_values(np.exp(f.values), f.domain.linear)


def extract_features(
    w: Union[Waveform, ComplexSpectrogram],
    domain: Union[str, Domain],
    bank: Optional[MelFilterbank] = None,
) -> FeatureMatrix:
    """
    Compute the representation of a waveform (or its spectrogram) in any domain.

    Args:
        w: Waveform, or an already computed spectrogram of it
        domain: Target domain
        bank: Mel filterbank for the fbank domains (default 40 bands)

    Returns:
        FeatureMatrix tagged with ``domain``
    """
    domain = as_domain(domain)
    spec = w if isinstance(w, ComplexSpectrogram) else stft(w)
    features = magnitude(spec)
    if domain.is_mel:
        features = apply_mel(features, bank)
    if domain.is_log:
        features = to_log(features)
    return features


def convert_features(f: FeatureMatrix, domain: Union[str, Domain],
                     bank: Optional[MelFilterbank] = None) -> FeatureMatrix:
    """
    Move features along the one-way chain fft -> fbank and across log/linear.

    Mel projection is not invertible, so fbank -> fft conversions are rejected.
    """
    domain = as_domain(domain)
    if f.domain is domain:
        return f
    if f.domain.is_mel and not domain.is_mel:
        raise DomainMismatchError(f"cannot convert {f.domain.value} to {domain.value}")
    current = to_linear(f) if f.domain.is_log else f
    if domain.is_mel and not current.domain.is_mel:
        current = apply_mel(current, bank)
    if domain.is_log:
        current = to_log(current)
    return current

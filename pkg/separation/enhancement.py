"""
Enhancement Module
==================

Inference with a trained checkpoint:

- realize the estimated clean representation in the method's output domain
  (noisy features times the predicted mask, or the de-normalized mapping output)
- resynthesize a waveform from estimated magnitudes and the noisy phase
- produce log-fbank ASR features along the feature path or through the waveform
"""

import logging
from typing import Callable, Optional

import numpy as np

from .containers import Checkpoint
from .dsp_core import (
    ComplexSpectrogram,
    Domain,
    FeatureMatrix,
    MelFilterbank,
    Waveform,
    convert_features,
    extract_features,
    istft,
    stft,
    to_linear,
)
from .errors import NotInvertibleError, SeparationError, ShapeMismatchError
from .neural import forward_pass

logger = logging.getLogger(__name__)

MaskOverride = Callable[[FeatureMatrix], np.ndarray]


def unit_mask(noisy_output: FeatureMatrix) -> np.ndarray:
    """All-ones mask; enhancement becomes a no-op along the feature path."""
    return np.ones_like(noisy_output.values)


def apply_mask(noisy_output: FeatureMatrix, mask: np.ndarray) -> FeatureMatrix:
    """Elementwise product of noisy output-domain features and a mask."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != noisy_output.values.shape:
        raise ShapeMismatchError(noisy_output.values.shape, mask.shape, "mask shape")
    return noisy_output.with_values(noisy_output.values * mask)


def resynthesize(estimate: FeatureMatrix, noisy_spec: ComplexSpectrogram,
                 out_len: Optional[int] = None) -> Waveform:
    """
    Combine estimated magnitudes with the noisy phase and invert the STFT.

    Args:
        estimate: fft or log-fft estimate; log-fft passes through to_linear first
        noisy_spec: STFT of the noisy input
        out_len: Output length in samples (default: the span covered by the frames)

    Returns:
        Resynthesized waveform of ``out_len`` samples
    """
    if estimate.domain.is_mel:
        raise NotInvertibleError(estimate.domain.value)
    magnitudes = to_linear(estimate) if estimate.domain.is_log else estimate
    if magnitudes.values.shape != noisy_spec.values.shape:
        raise ShapeMismatchError(noisy_spec.values.shape, magnitudes.values.shape, "estimate shape")
    if out_len is None:
        out_len = (noisy_spec.frames - 1) * noisy_spec.frame_hop + noisy_spec.window_len

    phase = np.exp(1j * np.angle(noisy_spec.values))
    spec = ComplexSpectrogram(magnitudes.values * phase, frame_hop=noisy_spec.frame_hop,
                              window_len=noisy_spec.window_len, sample_rate=noisy_spec.sample_rate)
    return istft(spec, out_len)


class Enhancer:
    """
    A loaded checkpoint ready for inference.

    ``mask_override`` replaces the predicted mask of masking and SA methods
    (e.g. ``unit_mask``); it receives the noisy output-domain features.
    """

    def __init__(self, checkpoint: Checkpoint, bank: Optional[MelFilterbank] = None,
                 mask_override: Optional[MaskOverride] = None):
        self.checkpoint = checkpoint
        self.method = checkpoint.method
        self.bank = bank
        if mask_override is not None and not self.method.uses_mask:
            raise SeparationError(f"mask override needs a masking or SA method, not '{self.method.name}'")
        self.mask_override = mask_override

    def _check_input(self, features: FeatureMatrix) -> None:
        expected = self.checkpoint.params.input_dim
        if features.dims != expected:
            raise ShapeMismatchError(expected, features.dims,
                                     f"checkpoint input dims for {features.domain.value}")

    def predict(self, noisy_spec: ComplexSpectrogram) -> np.ndarray:
        """Raw network output (normalized space for mapping methods)."""
        features = extract_features(noisy_spec, self.method.input_domain, self.bank)
        self._check_input(features)
        network_input = self.checkpoint.normalizer.normalize_input(features.values)
        return forward_pass(self.checkpoint.params, self.checkpoint.head, network_input).output

    def enhance_spectrogram(self, noisy_spec: ComplexSpectrogram) -> FeatureMatrix:
        noisy_output = extract_features(noisy_spec, self.method.output_domain, self.bank)
        if self.method.uses_mask:
            mask = self.mask_override(noisy_output) if self.mask_override else self.predict(noisy_spec)
            return apply_mask(noisy_output, mask)
        estimate = self.checkpoint.normalizer.denormalize_output(self.predict(noisy_spec))
        return noisy_output.with_values(estimate)

    def enhance_features(self, noisy: Waveform) -> FeatureMatrix:
        """
        Estimated clean representation in the method's output domain.

        Args:
            noisy: Noisy input waveform

        Returns:
            FeatureMatrix tagged with the output domain
        """
        return self.enhance_spectrogram(stft(noisy))

    def enhance_waveform(self, noisy: Waveform) -> Waveform:
        """Noisy-phase resynthesis of the estimate; same length as ``noisy``."""
        if not self.method.invertible:
            raise NotInvertibleError(self.method.output_domain.value)
        noisy_spec = stft(noisy)
        return resynthesize(self.enhance_spectrogram(noisy_spec), noisy_spec, len(noisy))

    def enhance_to_asr_features(self, noisy: Waveform, via_waveform: bool = False) -> FeatureMatrix:
        """
        log-fbank features of the enhanced signal.

        Args:
            noisy: Noisy input waveform
            via_waveform: Resynthesize with the noisy phase and recompute the
                features from the waveform instead of converting the estimate

        Returns:
            log-fbank FeatureMatrix
        """
        if via_waveform:
            return extract_features(self.enhance_waveform(noisy), Domain.LOG_FBANK, self.bank)
        return convert_features(self.enhance_features(noisy), Domain.LOG_FBANK, self.bank)


def enhance_features(checkpoint: Checkpoint, noisy: Waveform, mask_override: Optional[MaskOverride] = None,
                     bank: Optional[MelFilterbank] = None) -> FeatureMatrix:
    return Enhancer(checkpoint, bank=bank, mask_override=mask_override).enhance_features(noisy)


def enhance_to_asr_features(checkpoint: Checkpoint, noisy: Waveform, via_waveform: bool = False,
                            mask_override: Optional[MaskOverride] = None,
                            bank: Optional[MelFilterbank] = None) -> FeatureMatrix:
    return Enhancer(checkpoint, bank=bank, mask_override=mask_override).enhance_to_asr_features(noisy, via_waveform)

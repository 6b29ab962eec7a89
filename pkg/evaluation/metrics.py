"""
Metrics Module

Enhancement-domain proxy metrics: feature-domain MSE, scale-invariant SDR,
measured mixture SNR and relative reduction against a baseline.
"""

import logging
from typing import Union

import numpy as np

from separation.dsp_core import FeatureMatrix, Waveform
from separation.errors import DegenerateSourceError, DomainMismatchError, ShapeMismatchError
from separation.training import squared_loss

logger = logging.getLogger(__name__)

SI_SDR_CAP_DB = 100.0


def feature_mse(estimate: FeatureMatrix, clean: FeatureMatrix) -> float:
    """
    Mean per-frame squared 2-norm of the difference (the training loss normalization).

    Args:
        estimate: Estimated representation
        clean: Clean reference in the same domain

    Returns:
        float: MSE value
    """
    if estimate.domain is not clean.domain:
        raise DomainMismatchError(f"estimate is {estimate.domain.value}, clean is {clean.domain.value}")
    return squared_loss(estimate, clean)


def _samples(w: Union[Waveform, np.ndarray]) -> np.ndarray:
    return w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)


def si_sdr(estimate: Union[Waveform, np.ndarray], reference: Union[Waveform, np.ndarray],
           cap_db: float = SI_SDR_CAP_DB) -> float:
    """
    Scale-invariant signal-to-distortion ratio in dB.

    10 log10(|a s|^2 / |a s - e|^2) with a = <e, s> / |s|^2, clamped to
    [-cap_db, cap_db]; a perfect estimate reports +cap_db.

    Args:
        estimate: Estimated waveform
        reference: Clean reference waveform of the same length
        cap_db: Magnitude cap in dB

    Returns:
        float: SI-SDR in dB
    """
    e, s = _samples(estimate), _samples(reference)
    if e.shape != s.shape:
        raise ShapeMismatchError(s.shape, e.shape, "waveform length")
    reference_energy = float(np.dot(s, s))
    if reference_energy == 0.0:
        raise DegenerateSourceError("SI-SDR reference is silent")

    alpha = float(np.dot(e, s)) / reference_energy
    target = alpha * s
    target_energy = float(np.dot(target, target))
    distortion = target - e
    distortion_energy = float(np.dot(distortion, distortion))

    if distortion_energy == 0.0:
        return cap_db
    if target_energy == 0.0:
        return -cap_db
    value = 10.0 * np.log10(target_energy / distortion_energy)
    return float(np.clip(value, -cap_db, cap_db))


def snr_db(clean: Union[Waveform, np.ndarray], noise: Union[Waveform, np.ndarray]) -> float:
    """Measured 10 log10(P_clean / P_noise) with P the mean squared amplitude."""
    clean_power = float(np.mean(_samples(clean) ** 2))
    noise_power = float(np.mean(_samples(noise) ** 2))
    if clean_power == 0.0:
        raise DegenerateSourceError()
    if noise_power == 0.0:
        return np.inf
    return float(10.0 * np.log10(clean_power / noise_power))


def relative_reduction(baseline: float, value: float) -> float:
    """Percentage by which ``value`` lies below ``baseline``."""
    if baseline == 0.0:
        return 0.0
    return float(100.0 * (baseline - value) / baseline)

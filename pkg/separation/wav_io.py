"""
WAV reading and writing: 16-bit signed PCM, mono, 16 kHz.

Amplitudes are mapped to [-1, 1) by division by 32768 on read; writes quantize
explicitly so the same waveform always produces byte-identical files.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import soundfile as sf

from .dsp_core import SAMPLE_RATE, Waveform
from .errors import SeparationError, UnsupportedSampleRateError

logger = logging.getLogger(__name__)

PCM_SCALE = 32768.0


def read_wav(path: Union[str, Path]) -> Waveform:
    """
    Read a mono 16 kHz WAV file.

    Args:
        path: WAV file path

    Returns:
        Waveform with samples in [-1, 1)
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"WAV file not found: {path}")

    info = sf.info(str(path))
    if info.channels != 1:
        raise SeparationError(f"{path}: expected mono audio, found {info.channels} channels")
    if info.samplerate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(info.samplerate, SAMPLE_RATE)
    if info.subtype != "PCM_16":
        logger.warning(f"{path}: subtype {info.subtype} is not PCM_16, converting")

    data, _ = sf.read(str(path), dtype="int16", always_2d=False)
    return Waveform(data.astype(np.float64) / PCM_SCALE, sample_rate=info.samplerate)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Map [-1, 1] amplitudes to int16, clipping out-of-range values."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(scaled, -PCM_SCALE, PCM_SCALE - 1).astype(np.int16)


def write_wav(path: Union[str, Path], waveform: Waveform, create_dirs: bool = True) -> int:
    """
    Write a waveform as 16-bit PCM WAV.

    Args:
        path: Output file path
        waveform: 16 kHz mono waveform
        create_dirs: If True, create parent directories if they don't exist

    Returns:
        Number of samples clipped to the int16 range
    """
    if waveform.sample_rate != SAMPLE_RATE:
        raise UnsupportedSampleRateError(waveform.sample_rate, SAMPLE_RATE)

    path = Path(path)
    if create_dirs:
        path.parent.mkdir(parents=True, exist_ok=True)

    scaled = np.round(waveform.samples * PCM_SCALE)
    clipped = int(np.count_nonzero((scaled < -PCM_SCALE) | (scaled > PCM_SCALE - 1)))
    if clipped:
        logger.warning(f"{path.name}: clipped {clipped} of {len(waveform)} samples to [-1, 1]")

    sf.write(str(path), quantize(waveform.samples), waveform.sample_rate, subtype="PCM_16", format="WAV")
    logger.debug(f"Wrote {path} ({len(waveform)} samples)")
    return clipped

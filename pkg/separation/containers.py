"""
Binary Containers Module
========================

Two self-describing little-endian file formats:

SEPF model checkpoint
    b"SEPF" | u16 version | u32 header length | canonical JSON header |
    every parameter tensor as float32, in ``ModelParameters.named_tensors`` order

SEPX enhanced-feature dump
    b"SEPX" | u16 version | u16 domain code | u32 frame_hop | u32 window_len |
    u32 sample_rate | u32 mel_band_count (0 for fft domains) | u32 frames |
    u32 dims | frames x dims float32, row-major by frame

Nothing time-dependent is written, so identical inputs give identical bytes.
"""

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .dsp_core import FRAME_HOP, MEL_BAND_COUNT, SAMPLE_RATE, WINDOW_LEN, Domain, FeatureMatrix
from .errors import ContainerFormatError, DomainMismatchError
from .neural import HeadKind, ModelParameters, from_tensors, tensor_shapes
from .normalization import FeatureNormalizer
from .targets import MethodConfig, get_method

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SEPF"
FEATURE_MAGIC = b"SEPX"
FORMAT_VERSION = 1

_CHECKPOINT_PREFIX = struct.Struct("<4sHI")
_FEATURE_HEADER = struct.Struct("<4sHH6I")
_FLOAT32 = np.dtype("<f4")

DOMAIN_CODES = {Domain.FFT: 0, Domain.LOG_FFT: 1, Domain.FBANK: 2, Domain.LOG_FBANK: 3}
_CODE_DOMAINS = {code: domain for domain, code in DOMAIN_CODES.items()}


def canonical_json(data: Dict[str, Any]) -> bytes:
    """Sorted keys and compact separators, UTF-8 encoded."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class Checkpoint:
    """A trained model bound to its method and normalization statistics."""
    params: ModelParameters
    method: MethodConfig
    normalizer: FeatureNormalizer
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def head(self) -> HeadKind:
        return self.method.head_kind

    def header(self) -> Dict[str, Any]:
        return {
            "architecture": {
                "layer_count": self.params.layer_count,
                "cell_count": self.params.cell_count,
                "input_dim": self.params.input_dim,
                "output_dim": self.params.output_dim,
            },
            "head": self.head.value,
            "method": {
                "name": self.method.name,
                "input_domain": self.method.input_domain.value,
                "output_domain": self.method.output_domain.value,
                "objective": self.method.objective.value,
            },
            "front_end": {
                "sample_rate": SAMPLE_RATE,
                "window_len": WINDOW_LEN,
                "frame_hop": FRAME_HOP,
                "mel_band_count": MEL_BAND_COUNT,
            },
            "normalizer": self.normalizer.to_dict(),
            "tensors": [{"name": name, "shape": list(t.shape)} for name, t in self.params.named_tensors()],
            "metadata": self.metadata,
        }


# =============================================================================
# SEPF CHECKPOINTS
# =============================================================================

def checkpoint_bytes(checkpoint: Checkpoint) -> bytes:
    header = canonical_json(checkpoint.header())
    parts = [_CHECKPOINT_PREFIX.pack(CHECKPOINT_MAGIC, FORMAT_VERSION, len(header)), header]
    parts.extend(t.astype(_FLOAT32).tobytes() for t in checkpoint.params.tensors())
    return b"".join(parts)


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint, create_dirs: bool = True) -> Path:
    """
    Write a SEPF checkpoint.

    Args:
        path: Output file path
        checkpoint: Model, method and normalizer to store
        create_dirs: If True, create parent directories if they don't exist

    Returns:
        Path written
    """
    path = Path(path)
    if create_dirs:
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(checkpoint_bytes(checkpoint))
    logger.debug(f"Saved checkpoint {path} ({checkpoint.method.name})")
    return path


def _split_checkpoint(data: bytes, source: str):
    if len(data) < _CHECKPOINT_PREFIX.size:
        raise ContainerFormatError(f"{source}: truncated checkpoint")
    magic, version, header_len = _CHECKPOINT_PREFIX.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise ContainerFormatError(f"{source}: bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"{source}: unsupported checkpoint version {version}")
    start = _CHECKPOINT_PREFIX.size
    try:
        header = json.loads(data[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerFormatError(f"{source}: unreadable header ({exc})") from exc
    return header, data[start + header_len:]


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    header, _ = _split_checkpoint(path.read_bytes(), str(path))
    return header


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a SEPF checkpoint.

    Tensor values come back as float64 holding the stored float32 values.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    header, payload = _split_checkpoint(path.read_bytes(), str(path))

    try:
        arch = header["architecture"]
        method = get_method(header["method"]["name"])
        shapes = tensor_shapes(arch["layer_count"], arch["cell_count"], arch["input_dim"], arch["output_dim"])
    except KeyError as exc:
        raise ContainerFormatError(f"{path}: header missing {exc}") from exc

    if method.input_domain.value != header["method"]["input_domain"] or \
            method.output_domain.value != header["method"]["output_domain"]:
        raise DomainMismatchError(f"{path}: header domains disagree with method '{method.name}'")
    if header.get("head") != method.head_kind.value:
        raise ContainerFormatError(f"{path}: head '{header.get('head')}' does not match method '{method.name}'")

    expected = sum(int(np.prod(shape)) for _, shape in shapes) * _FLOAT32.itemsize
    if len(payload) != expected:
        raise ContainerFormatError(f"{path}: expected {expected} tensor bytes, found {len(payload)}")

    flat = np.frombuffer(payload, dtype=_FLOAT32).astype(np.float64)
    tensors, cursor = [], 0
    for _, shape in shapes:
        size = int(np.prod(shape))
        tensors.append(flat[cursor:cursor + size].reshape(shape).copy())
        cursor += size

    params = from_tensors(arch["layer_count"], arch["cell_count"], arch["input_dim"], arch["output_dim"], tensors)
    normalizer = FeatureNormalizer.from_dict(header["normalizer"])
    logger.debug(f"Loaded checkpoint {path} ({method.name}, {params.layer_count}x{params.cell_count})")
    return Checkpoint(params=params, method=method, normalizer=normalizer, metadata=header.get("metadata", {}))


# =============================================================================
# SEPX FEATURE DUMPS
# =============================================================================

def write_feature_dump(path: Union[str, Path], features: FeatureMatrix, create_dirs: bool = True) -> Path:
    """Write a FeatureMatrix as a SEPX dump."""
    path = Path(path)
    if create_dirs:
        path.parent.mkdir(parents=True, exist_ok=True)
    header = _FEATURE_HEADER.pack(
        FEATURE_MAGIC,
        FORMAT_VERSION,
        DOMAIN_CODES[features.domain],
        features.frame_hop,
        features.window_len,
        features.sample_rate,
        features.mel_band_count or 0,
        features.frames,
        features.dims,
    )
    path.write_bytes(header + np.ascontiguousarray(features.values, dtype=_FLOAT32).tobytes())
    logger.debug(f"Wrote feature dump {path} ({features.domain.value}, {features.frames}x{features.dims})")
    return path


def read_feature_dump_header(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    with open(path, "rb") as f:
        raw = f.read(_FEATURE_HEADER.size)
    return _parse_feature_header(raw, str(path))


def _parse_feature_header(raw: bytes, source: str) -> Dict[str, Any]:
    if len(raw) < _FEATURE_HEADER.size:
        raise ContainerFormatError(f"{source}: truncated feature dump")
    magic, version, code, hop, window_len, sample_rate, mel_bands, frames, dims = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise ContainerFormatError(f"{source}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"{source}: unsupported feature dump version {version}")
    if code not in _CODE_DOMAINS:
        raise ContainerFormatError(f"{source}: unknown domain code {code}")
    return {
        "version": version,
        "domain": _CODE_DOMAINS[code].value,
        "frame_hop": hop,
        "window_len": window_len,
        "sample_rate": sample_rate,
        "mel_band_count": mel_bands or None,
        "frames": frames,
        "dims": dims,
    }


def read_feature_dump(path: Union[str, Path]) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Feature dump not found: {path}")
    data = path.read_bytes()
    header = _parse_feature_header(data, str(path))
    payload = data[_FEATURE_HEADER.size:]
    expected = header["frames"] * header["dims"] * _FLOAT32.itemsize
    if len(payload) != expected:
        raise ContainerFormatError(f"{path}: expected {expected} data bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype=_FLOAT32).astype(np.float64).reshape(header["frames"], header["dims"])
    return FeatureMatrix(
        values,
        Domain(header["domain"]),
        frame_hop=header["frame_hop"],
        window_len=header["window_len"],
        sample_rate=header["sample_rate"],
        mel_band_count=header["mel_band_count"],
    )


def inspect_container(path: Union[str, Path]) -> Dict[str, Any]:
    """Header of either container type, tagged with its kind."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == FEATURE_MAGIC:
        return {"kind": "SEPX", **read_feature_dump_header(path)}
    if magic == CHECKPOINT_MAGIC:
        header = read_checkpoint_header(path)
        header.pop("normalizer", None)
        return {"kind": "SEPF", **header}
    raise ContainerFormatError(f"{path}: unrecognized container magic {magic!r}")

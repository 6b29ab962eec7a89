"""
Per-dimension feature normalization fitted on the training split.

Inputs are standardized to zero mean and unit variance. For mapping methods the
clean targets are shifted by their per-dimension training minimum and divided
by their standard deviation, which keeps normalized targets nonnegative and so
within reach of the softplus head. Masks are never normalized.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional

import numpy as np

from .errors import EmptyManifestError, ShapeMismatchError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-5


@dataclass
class FeatureNormalizer:
    """Stored in the checkpoint header and applied identically at inference."""
    input_mean: np.ndarray
    input_std: np.ndarray
    target_offset: Optional[np.ndarray] = None
    target_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.input_mean = np.asarray(self.input_mean, dtype=np.float64)
        self.input_std = np.asarray(self.input_std, dtype=np.float64)
        if self.input_mean.shape != self.input_std.shape:
            raise ShapeMismatchError(self.input_mean.shape, self.input_std.shape, "normalizer input stats")
        if (self.target_offset is None) != (self.target_scale is None):
            raise ValueError("target_offset and target_scale must be given together")
        if self.target_offset is not None:
            self.target_offset = np.asarray(self.target_offset, dtype=np.float64)
            self.target_scale = np.asarray(self.target_scale, dtype=np.float64)

    @property
    def normalizes_targets(self) -> bool:
        return self.target_offset is not None

    def normalize_input(self, values: np.ndarray) -> np.ndarray:
        if values.shape[-1] != self.input_mean.shape[0]:
            raise ShapeMismatchError(self.input_mean.shape[0], values.shape[-1], "input dims")
        return (values - self.input_mean) / self.input_std

    def normalize_target(self, values: np.ndarray) -> np.ndarray:
        if not self.normalizes_targets:
            return values
        return (values - self.target_offset) / self.target_scale

    def denormalize_output(self, values: np.ndarray) -> np.ndarray:
        if not self.normalizes_targets:
            return values
        return values * self.target_scale + self.target_offset

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
        }
        if self.normalizes_targets:
            data["target_offset"] = self.target_offset.tolist()
            data["target_scale"] = self.target_scale.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureNormalizer":
        return cls(
            input_mean=data["input_mean"],
            input_std=data["input_std"],
            target_offset=data.get("target_offset"),
            target_scale=data.get("target_scale"),
        )


def identity_normalizer(input_dim: int, output_dim: Optional[int] = None) -> FeatureNormalizer:
    """No-op statistics; ``output_dim`` adds identity target statistics."""
    if output_dim is None:
        return FeatureNormalizer(np.zeros(input_dim), np.ones(input_dim))
    return FeatureNormalizer(np.zeros(input_dim), np.ones(input_dim), np.zeros(output_dim), np.ones(output_dim))


def fit_normalizer(inputs: Iterable[np.ndarray], targets: Optional[Iterable[np.ndarray]] = None) -> FeatureNormalizer:
    """
    Compute normalization statistics over every frame of the training split.

    Args:
        inputs: frames x dims input matrices, one per utterance
        targets: Clean output-domain matrices for mapping methods, else None

    Returns:
        FeatureNormalizer
    """
    stacked = [np.asarray(v, dtype=np.float64) for v in inputs]
    if not stacked:
        raise EmptyManifestError("no training utterances to fit normalization on")
    frames = np.concatenate(stacked, axis=0)
    mean = frames.mean(axis=0)
    std = np.maximum(frames.std(axis=0), STD_FLOOR)

    offset = scale = None
    if targets is not None:
        clean = np.concatenate([np.asarray(v, dtype=np.float64) for v in targets], axis=0)
        offset = clean.min(axis=0)
        scale = np.maximum(clean.std(axis=0), STD_FLOOR)

    logger.debug(f"Fitted normalizer over {frames.shape[0]} frames "
                 f"(target statistics: {'yes' if offset is not None else 'no'})")
    return FeatureNormalizer(mean, std, offset, scale)

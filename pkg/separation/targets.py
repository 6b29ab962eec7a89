"""
Training Targets Module
=======================

The method matrix (input domain, output domain, optimization objective) and the
construction of the supervised target for every cell of it:

- ratio masking: the clipped direct mask  m = clip(s / y, 0, 1)
- direct mapping: the clean representation s
- signal approximation: the clean representation s (the mask stays implicit)
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Union

import numpy as np

from .dsp_core import Domain, FeatureMatrix, MelFilterbank, Waveform, as_domain, extract_features, stft
from .errors import DomainMismatchError, InvalidMethodError, SeparationError, ShapeMismatchError
from .neural import HeadKind

logger = logging.getLogger(__name__)


class Objective(Enum):
    """Supervised separation objectives"""
    MASKING = "masking"
    MAPPING = "mapping"
    SIGNAL_APPROXIMATION = "signal-approximation"

    @property
    def label(self) -> str:
        return "SA" if self is Objective.SIGNAL_APPROXIMATION else self.value


_OBJECTIVE_ALIASES = {
    "masking": Objective.MASKING,
    "ratio masking": Objective.MASKING,
    "mapping": Objective.MAPPING,
    "direct mapping": Objective.MAPPING,
    "sa": Objective.SIGNAL_APPROXIMATION,
    "signal-approximation": Objective.SIGNAL_APPROXIMATION,
    "signal approximation": Objective.SIGNAL_APPROXIMATION,
}

# (input domain, output domain, objective) for each evaluated method
_METHOD_ROWS = [
    (Domain.LOG_FBANK, Domain.LOG_FBANK, Objective.MAPPING),
    (Domain.LOG_FBANK, Domain.LOG_FBANK, Objective.SIGNAL_APPROXIMATION),
    (Domain.LOG_FBANK, Domain.LOG_FBANK, Objective.MASKING),
    (Domain.LOG_FFT, Domain.LOG_FFT, Objective.MAPPING),
    (Domain.LOG_FFT, Domain.LOG_FFT, Objective.SIGNAL_APPROXIMATION),
    (Domain.LOG_FFT, Domain.LOG_FFT, Objective.MASKING),
    (Domain.LOG_FBANK, Domain.FBANK, Objective.MASKING),
    (Domain.LOG_FFT, Domain.FFT, Objective.MASKING),
]


def as_objective(value: Union[str, Objective]) -> Objective:
    if isinstance(value, Objective):
        return value
    key = str(value).strip().lower()
    if key not in _OBJECTIVE_ALIASES:
        raise SeparationError(f"unknown objective '{value}'")
    return _OBJECTIVE_ALIASES[key]


def method_label(output_domain: Domain, objective: Objective) -> str:
    return f"{output_domain.value} {objective.label}"


METHOD_NAMES: List[str] = [method_label(out_dom, obj) for _, out_dom, obj in _METHOD_ROWS]


@dataclass(frozen=True)
class MethodConfig:
    """One evaluated method: input features, output domain, objective."""
    name: str
    input_domain: Domain
    output_domain: Domain
    objective: Objective

    def __post_init__(self):
        if (self.input_domain, self.output_domain, self.objective) not in _METHOD_ROWS:
            raise InvalidMethodError(
                f"{self.input_domain.value} -> {self.output_domain.value} ({self.objective.value})",
                METHOD_NAMES,
            )

    @property
    def head_kind(self) -> HeadKind:
        return HeadKind.SOFTPLUS if self.objective is Objective.MAPPING else HeadKind.SIGMOID

    @property
    def uses_mask(self) -> bool:
        return self.objective is not Objective.MAPPING

    @property
    def invertible(self) -> bool:
        """True when estimates can be resynthesized to a waveform."""
        return not self.output_domain.is_mel


METHOD_TABLE: Dict[str, MethodConfig] = {
    method_label(out_dom, obj): MethodConfig(method_label(out_dom, obj), in_dom, out_dom, obj)
    for in_dom, out_dom, obj in _METHOD_ROWS
}


def _normalize_name(name: str) -> str:
    return re.sub(r"\s+", " ", str(name).strip().lower())


def get_method(name: str) -> MethodConfig:
    """
    Look up a method by its table label (case-insensitive, e.g. "log-fbank masking").

    Raises:
        InvalidMethodError: listing the eight valid labels
    """
    wanted = _normalize_name(name)
    for label, method in METHOD_TABLE.items():
        if _normalize_name(label) == wanted:
            return method
    # "log-fft signal-approximation" and similar spellings
    parts = wanted.split(" ", 1)
    if len(parts) == 2 and parts[1] in _OBJECTIVE_ALIASES:
        try:
            label = method_label(as_domain(parts[0]), _OBJECTIVE_ALIASES[parts[1]])
            if label in METHOD_TABLE:
                return METHOD_TABLE[label]
        except ValueError:
            pass
    raise InvalidMethodError(name, METHOD_NAMES)


def make_method(input_domain: Union[str, Domain], output_domain: Union[str, Domain],
                objective: Union[str, Objective]) -> MethodConfig:
    """Build a MethodConfig from its triple; only the eight table rows are accepted."""
    in_dom, out_dom, obj = as_domain(input_domain), as_domain(output_domain), as_objective(objective)
    if (in_dom, out_dom, obj) not in _METHOD_ROWS:
        raise InvalidMethodError(f"{in_dom.value} -> {out_dom.value} ({obj.value})", METHOD_NAMES)
    return METHOD_TABLE[method_label(out_dom, obj)]


@dataclass
class TrainingPair:
    """
    Network input and desired output for one utterance.

    ``noisy_output`` holds the noisy features in the output domain; the
    signal-approximation loss and mask application both need them.
    """
    input: FeatureMatrix
    target: FeatureMatrix
    config: MethodConfig
    noisy_output: FeatureMatrix

    def __post_init__(self):
        if self.input.frames != self.target.frames:
            raise ShapeMismatchError(self.input.frames, self.target.frames, "frame count")
        if self.input.domain is not self.config.input_domain:
            raise DomainMismatchError(f"input is {self.input.domain.value}, "
                                      f"method expects {self.config.input_domain.value}")
        if self.target.domain is not self.config.output_domain:
            raise DomainMismatchError(f"target is {self.target.domain.value}, "
                                      f"method expects {self.config.output_domain.value}")
        if self.config.objective is Objective.MASKING:
            if np.any(self.target.values < 0) or np.any(self.target.values > 1):
                raise SeparationError("masking targets must lie in [0, 1]")

    @property
    def frames(self) -> int:
        return self.input.frames


def direct_mask(clean: FeatureMatrix, noisy: FeatureMatrix) -> FeatureMatrix:
    """
    Clipped direct ratio mask clip(clean / noisy, 0, 1).

    Where the noisy value is exactly zero the mask is 0 if the clean value is
    also zero and 1 otherwise. In log domains the log-compressed values are
    divided directly.

    Args:
        clean: Clean representation
        noisy: Noisy representation in the same domain and shape

    Returns:
        Mask with the shared domain tag, all values in [0, 1]
    """
    if clean.domain is not noisy.domain:
        raise DomainMismatchError(f"clean is {clean.domain.value}, noisy is {noisy.domain.value}")
    if clean.values.shape != noisy.values.shape:
        raise ShapeMismatchError(noisy.values.shape, clean.values.shape)

    s, y = clean.values, noisy.values
    zero = y == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, 0.0, s / np.where(zero, 1.0, y))
    ratio = np.where(zero, np.where(s == 0, 0.0, 1.0), ratio)
    return clean.with_values(np.clip(ratio, 0.0, 1.0))


def build_training_pair(clean_wav: Waveform, noisy_wav: Waveform, config: MethodConfig,
                        bank: Optional[MelFilterbank] = None) -> TrainingPair:
    """
    Route one (clean, noisy) utterance through the method's domains.

    Args:
        clean_wav: Clean reference waveform
        noisy_wav: Noisy mixture of the same length
        config: Method to build the pair for
        bank: Mel filterbank override

    Returns:
        TrainingPair with noisy input features and the objective's target
    """
    if len(clean_wav) != len(noisy_wav):
        raise ShapeMismatchError(len(noisy_wav), len(clean_wav), "waveform length")

    noisy_spec = stft(noisy_wav)
    noisy_input = extract_features(noisy_spec, config.input_domain, bank)
    noisy_output = extract_features(noisy_spec, config.output_domain, bank)
    clean_output = extract_features(clean_wav, config.output_domain, bank)

    if config.objective is Objective.MASKING:
        target = direct_mask(clean_output, noisy_output)
    else:
        target = clean_output
    return TrainingPair(input=noisy_input, target=target, config=config, noisy_output=noisy_output)


def oracle_mask(clean_wav: Waveform, noisy_wav: Waveform, domain: Union[str, Domain],
                bank: Optional[MelFilterbank] = None) -> FeatureMatrix:
    """Direct mask computed from the true clean / noisy pair."""
    domain = as_domain(domain)
    return direct_mask(extract_features(clean_wav, domain, bank), extract_features(noisy_wav, domain, bank))

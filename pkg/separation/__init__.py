"""
Separation Package
==================

Supervised single-channel speech separation front-end.

Modules:
- dsp_core: STFT/ISTFT, magnitude, mel filterbank, log compression and domain conversions
- wav_io: 16-bit PCM WAV reading and writing
- targets: the eight evaluated methods and their training targets (direct mask, clean features)
- neural: bidirectional LSTM stack with exact backpropagation through time
- normalization: per-dimension input and mapping-target statistics
- training: SNR-controlled mixing, objective losses and the optimization loop
- containers: SEPF checkpoints and SEPX feature dumps
- enhancement: inference, mask application and noisy-phase resynthesis
- config_manager: YAML run configuration with overrides
- cli: command-line subcommands
"""

from .errors import SeparationError
from .dsp_core import (
    Domain,
    Waveform,
    ComplexSpectrogram,
    FeatureMatrix,
    MelFilterbank,
    stft,
    istft,
    magnitude,
    apply_mel,
    to_log,
    to_linear,
    extract_features,
    convert_features,
    build_mel_filterbank,
)
from .wav_io import read_wav, write_wav
from .targets import (
    METHOD_TABLE,
    MethodConfig,
    Objective,
    TrainingPair,
    get_method,
    make_method,
    direct_mask,
    build_training_pair,
    oracle_mask,
)
from .neural import HeadKind, ModelParameters, init_parameters, forward, backward, swap_directions
from .training import (
    Mixture,
    MixtureSpec,
    TrainingConfig,
    LossReport,
    mix_at_snr,
    squared_loss,
    objective_loss,
    train,
    load_manifest,
    write_manifest,
)
from .containers import Checkpoint, save_checkpoint, load_checkpoint, write_feature_dump, read_feature_dump
from .enhancement import Enhancer, resynthesize, enhance_features, enhance_to_asr_features
from .config_manager import ConfigManager, create_config_manager
from .utils import setup_logging

__all__ = [
    'SeparationError',
    'Domain',
    'Waveform',
    'ComplexSpectrogram',
    'FeatureMatrix',
    'MelFilterbank',
    'stft',
    'istft',
    'magnitude',
    'apply_mel',
    'to_log',
    'to_linear',
    'extract_features',
    'convert_features',
    'build_mel_filterbank',
    'read_wav',
    'write_wav',
    'METHOD_TABLE',
    'MethodConfig',
    'Objective',
    'TrainingPair',
    'get_method',
    'make_method',
    'direct_mask',
    'build_training_pair',
    'oracle_mask',
    'HeadKind',
    'ModelParameters',
    'init_parameters',
    'forward',
    'backward',
    'swap_directions',
    'Mixture',
    'MixtureSpec',
    'TrainingConfig',
    'LossReport',
    'mix_at_snr',
    'squared_loss',
    'objective_loss',
    'train',
    'load_manifest',
    'write_manifest',
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'write_feature_dump',
    'read_feature_dump',
    'Enhancer',
    'resynthesize',
    'enhance_features',
    'enhance_to_asr_features',
    'ConfigManager',
    'create_config_manager',
    'setup_logging',
]

"""
Evaluation Package:

- metrics: feature MSE, SI-SDR, measured SNR and relative reduction
- runner: scores checkpoints, the noisy baseline and oracle masks on a manifest
- report: aligned text table and line-delimited JSON record file
- synthetic: deterministic voiced utterances, white/pink noise and babble
"""

from .metrics import (
    feature_mse,
    si_sdr,
    snr_db,
    relative_reduction
)
from .runner import (
    EvaluationReport,
    EvaluationRunner,
    evaluate_run
)
from .report import (
    render_text,
    render_jsonl,
    write_report
)
from .synthetic import (
    voiced_utterance,
    make_noise,
    synthetic_mixtures,
    write_corpus
)

__all__ = [
    'feature_mse',
    'si_sdr',
    'snr_db',
    'relative_reduction',
    'EvaluationReport',
    'EvaluationRunner',
    'evaluate_run',
    'render_text',
    'render_jsonl',
    'write_report',
    'voiced_utterance',
    'make_noise',
    'synthetic_mixtures',
    'write_corpus'
]

"""
Evaluation Runner Module

Scores trained checkpoints, the noisy-input baseline and oracle-mask bounds on
an evaluation manifest, per noise condition and SNR.

Systems:
- ``noisy``: the unprocessed mixture
- ``oracle:<domain>``: the direct mask computed from the hidden clean reference
- ``<method>``: each checkpoint's method label

Metrics:
- ``mse:<domain>``: feature MSE in a method's output domain
- ``asr_mse``: log-fbank MSE along the feature path
- ``asr_mse_waveform``: log-fbank MSE recomputed from the noisy-phase resynthesis
- ``asr_path_difference``: MSE between the two log-fbank paths
- ``si_sdr``: SI-SDR (dB) of the resynthesized waveform
- ``asr_mse_rel_reduction``: % reduction of asr_mse relative to the noisy baseline
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from separation.containers import Checkpoint, load_checkpoint
from separation.dsp_core import Domain, MelFilterbank, convert_features, extract_features, stft
from separation.enhancement import Enhancer, apply_mask, resynthesize
from separation.errors import EmptyManifestError
from separation.targets import direct_mask
from separation.training import MixtureSpec, Utterance, load_manifest, load_utterance
from separation.utils import resolve_worker_count

from .metrics import SI_SDR_CAP_DB, feature_mse, relative_reduction, si_sdr
from .report import RECORD_COLUMNS, render_jsonl, render_text, write_report

logger = logging.getLogger(__name__)

NOISY = "noisy"
CLEAN_CONDITION = "clean"
NO_SNR = "n/a"
AVERAGE = "avg"

METRIC_ORDER = ["si_sdr", "asr_mse", "asr_mse_waveform", "asr_path_difference", "asr_mse_rel_reduction"]


def snr_label(snr_db: Optional[float]) -> str:
    return NO_SNR if snr_db is None else f"{snr_db:g}"


def oracle_name(domain: Domain) -> str:
    return f"oracle:{domain.value}"


@dataclass
class EvaluationReport:
    """Aggregated records plus the per-mixture values they were built from."""
    records: pd.DataFrame
    mixture_records: pd.DataFrame
    methods: List[str] = field(default_factory=list)

    def value(self, method: str, condition: str, snr_db: str, metric: str) -> float:
        rows = self.records[(self.records.method == method) & (self.records.condition == condition)
                            & (self.records.snr_db == snr_db) & (self.records.metric == metric)]
        if rows.empty:
            raise KeyError((method, condition, snr_db, metric))
        return float(rows.value.iloc[0])

    def to_text(self) -> str:
        return render_text(self.records)

    def to_jsonl(self) -> str:
        return render_jsonl(self.records)

    def write(self, prefix: Union[str, Path]) -> Tuple[Path, Path]:
        return write_report(self.records, prefix)


class EvaluationRunner:
    """
    Evaluates checkpoints on a list of mixtures.

    Usage:
        runner = EvaluationRunner([load_checkpoint("runs/a/checkpoint_final.sepf")])
        report = runner.run(load_manifest("corpus/eval.tsv"))
    """

    def __init__(self, checkpoints: Sequence[Checkpoint], bank: Optional[MelFilterbank] = None,
                 include_clean: bool = False, si_sdr_cap_db: float = SI_SDR_CAP_DB,
                 workers: Optional[int] = None):
        self.checkpoints = list(checkpoints)
        self.enhancers = [Enhancer(cp, bank=bank) for cp in self.checkpoints]
        self.bank = bank
        self.include_clean = include_clean
        self.cap = si_sdr_cap_db
        self.workers = resolve_worker_count(workers)

        self.oracle_domains: List[Domain] = []
        for cp in self.checkpoints:
            if cp.method.output_domain not in self.oracle_domains:
                self.oracle_domains.append(cp.method.output_domain)
        self.systems = [NOISY] + [oracle_name(d) for d in self.oracle_domains] + \
            [cp.method.name for cp in self.checkpoints]

    # -- per mixture ----------------------------------------------------------

    def _asr(self, features) -> Any:
        return convert_features(features, Domain.LOG_FBANK, self.bank)

    def evaluate_mixture(self, utterance: Utterance, condition: str, snr: str) -> List[Dict[str, Any]]:
        """Rows (system, metric, value) for one mixture."""
        clean, noisy = utterance.clean, utterance.noisy
        noisy_spec = stft(noisy)
        clean_asr = extract_features(clean, Domain.LOG_FBANK, self.bank)
        rows: List[Dict[str, Any]] = []

        def add(system: str, metric: str, value: float):
            rows.append({"mixture": utterance.name, "method": system, "condition": condition,
                         "snr_db": snr, "metric": metric, "value": float(value)})

        noisy_asr = extract_features(noisy_spec, Domain.LOG_FBANK, self.bank)
        add(NOISY, "si_sdr", si_sdr(noisy, clean, self.cap))
        add(NOISY, "asr_mse", feature_mse(noisy_asr, clean_asr))
        for domain in self.oracle_domains:
            add(NOISY, f"mse:{domain.value}", feature_mse(extract_features(noisy_spec, domain, self.bank),
                                                          extract_features(clean, domain, self.bank)))

        for domain in self.oracle_domains:
            clean_out = extract_features(clean, domain, self.bank)
            noisy_out = extract_features(noisy_spec, domain, self.bank)
            estimate = apply_mask(noisy_out, direct_mask(clean_out, noisy_out).values)
            self._score(add, oracle_name(domain), estimate, clean_out, clean, clean_asr, noisy_spec, len(noisy))

        for enhancer in self.enhancers:
            method = enhancer.method
            estimate = enhancer.enhance_spectrogram(noisy_spec)
            clean_out = extract_features(clean, method.output_domain, self.bank)
            self._score(add, method.name, estimate, clean_out, clean, clean_asr, noisy_spec, len(noisy))
        return rows

    def _score(self, add, system, estimate, clean_out, clean, clean_asr, noisy_spec, length) -> None:
        add(system, f"mse:{estimate.domain.value}", feature_mse(estimate, clean_out))
        feature_path = self._asr(estimate)
        add(system, "asr_mse", feature_mse(feature_path, clean_asr))
        if estimate.domain.is_mel:
            return
        waveform = resynthesize(estimate, noisy_spec, length)
        waveform_path = extract_features(waveform, Domain.LOG_FBANK, self.bank)
        add(system, "asr_mse_waveform", feature_mse(waveform_path, clean_asr))
        add(system, "asr_path_difference", feature_mse(waveform_path, feature_path))
        add(system, "si_sdr", si_sdr(waveform, clean, self.cap))

    # -- whole run --------------------------------------------------------------

    def _jobs(self, mixtures: Sequence[Union[MixtureSpec, Utterance]]) -> List[Tuple[Utterance, str, str]]:
        jobs = []
        seen_clean = set()
        for item in mixtures:
            utterance = load_utterance(item) if isinstance(item, MixtureSpec) else item
            jobs.append((utterance, utterance.condition, snr_label(utterance.snr_db)))
            if self.include_clean:
                key = item.clean_source if isinstance(item, MixtureSpec) else (utterance.name or id(utterance.clean))
                if key not in seen_clean:
                    seen_clean.add(key)
                    jobs.append((Utterance(clean=utterance.clean, noisy=utterance.clean, name=utterance.name,
                                           condition=CLEAN_CONDITION), CLEAN_CONDITION, NO_SNR))
        return jobs

    def run(self, mixtures: Sequence[Union[MixtureSpec, Utterance]]) -> EvaluationReport:
        """
        Evaluate every system on every mixture.

        Raises:
            EmptyManifestError: if ``mixtures`` is empty
        """
        if not mixtures:
            raise EmptyManifestError()
        jobs = self._jobs(mixtures)
        logger.info(f"Evaluating {len(self.systems)} systems on {len(jobs)} inputs (workers={self.workers})")

        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            per_mixture = list(pool.map(lambda job: self.evaluate_mixture(*job), jobs))
        mixture_records = pd.DataFrame([row for rows in per_mixture for row in rows])

        records = aggregate(mixture_records, self.systems)
        for method in [cp.method.name for cp in self.checkpoints if cp.method.invertible]:
            diff = records[(records.method == method) & (records.metric == "asr_path_difference")
                           & (records.snr_db == AVERAGE)]
            for row in diff.itertuples(index=False):
                logger.info(f"{method} [{row.condition}]: feature path vs waveform path log-fbank MSE {row.value:.6f}")
        return EvaluationReport(records=records, mixture_records=mixture_records,
                                methods=[cp.method.name for cp in self.checkpoints])


def _snr_sort_key(label: str) -> float:
    if label == AVERAGE:
        return np.inf
    if label == NO_SNR:
        return np.finfo(np.float64).max
    return float(label)


def _metric_sort_key(metric: str) -> int:
    if metric.startswith("mse:"):
        return 0
    return 1 + METRIC_ORDER.index(metric) if metric in METRIC_ORDER else len(METRIC_ORDER) + 1


def aggregate(mixture_records: pd.DataFrame, systems: Sequence[str]) -> pd.DataFrame:
    """
    Mean per (system, condition, SNR, metric), plus ``avg`` rows over all SNRs of a
    condition and relative asr_mse reductions against the noisy baseline.
    """
    if mixture_records.empty:
        return pd.DataFrame(columns=RECORD_COLUMNS)

    keys = ["method", "condition", "snr_db", "metric"]
    per_snr = mixture_records.groupby(keys, sort=False)["value"].mean().reset_index()
    noisy_conditions = mixture_records[mixture_records.snr_db != NO_SNR]
    averages = noisy_conditions.groupby(["method", "condition", "metric"], sort=False)["value"].mean().reset_index()
    averages["snr_db"] = AVERAGE
    combined = pd.concat([per_snr, averages[keys + ["value"]]], ignore_index=True)

    baseline = combined[(combined.method == NOISY) & (combined.metric == "asr_mse")]
    baseline_lookup = {(r.condition, r.snr_db): r.value for r in baseline.itertuples(index=False)}
    reductions = []
    for r in combined[combined.metric == "asr_mse"].itertuples(index=False):
        if r.method == NOISY or (r.condition, r.snr_db) not in baseline_lookup:
            continue
        reductions.append({"method": r.method, "condition": r.condition, "snr_db": r.snr_db,
                           "metric": "asr_mse_rel_reduction",
                           "value": relative_reduction(baseline_lookup[(r.condition, r.snr_db)], r.value)})
    if reductions:
        combined = pd.concat([combined, pd.DataFrame(reductions)], ignore_index=True)

    conditions = list(dict.fromkeys(mixture_records.condition))
    system_rank = {name: i for i, name in enumerate(systems)}
    combined["_system"] = combined.method.map(lambda m: system_rank.get(m, len(system_rank)))
    combined["_condition"] = combined.condition.map(conditions.index)
    combined["_snr"] = combined.snr_db.map(_snr_sort_key)
    combined["_metric"] = combined.metric.map(_metric_sort_key)
    combined = combined.sort_values(["_system", "_condition", "_snr", "_metric", "metric"], kind="mergesort")
    return combined[RECORD_COLUMNS].reset_index(drop=True)


def evaluate_run(checkpoints: Sequence[Union[Checkpoint, str, Path]],
                 manifest: Union[str, Path, Sequence[Union[MixtureSpec, Utterance]]],
                 report_path: Optional[Union[str, Path]] = None, include_clean: bool = False,
                 si_sdr_cap_db: float = SI_SDR_CAP_DB, bank: Optional[MelFilterbank] = None,
                 workers: Optional[int] = None) -> EvaluationReport:
    """
    Evaluate checkpoints on an evaluation manifest and optionally write the report.

    Args:
        checkpoints: Loaded checkpoints or SEPF paths
        manifest: Manifest path, or mixture specs / utterances
        report_path: Prefix for PREFIX.txt and PREFIX.jsonl (None writes nothing)
        include_clean: Also run every system on the clean utterances
        si_sdr_cap_db: SI-SDR cap in dB
        bank: Mel filterbank override
        workers: Worker threads (capped by SEPF_THREADS)

    Returns:
        EvaluationReport
    """
    loaded = [cp if isinstance(cp, Checkpoint) else load_checkpoint(cp) for cp in checkpoints]
    mixtures = load_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    runner = EvaluationRunner(loaded, bank=bank, include_clean=include_clean,
                              si_sdr_cap_db=si_sdr_cap_db, workers=workers)
    report = runner.run(mixtures)
    if report_path is not None:
        report.write(report_path)
    return report

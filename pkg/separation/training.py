"""
Training Module
===============

Mixture generation at prescribed SNRs, the squared-loss objectives for ratio
masking, direct mapping and signal approximation, and the optimization loop.

Optimization is plain gradient descent with momentum and global gradient-norm
clipping, with an optional linear warmup and a per-objective learning-rate
scale. Per-utterance passes inside a batch may run on a thread pool; the
gradient reduction always follows utterance order, so results do not depend on
the worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .containers import Checkpoint, save_checkpoint
from .dsp_core import FeatureMatrix, MelFilterbank, Waveform
from .errors import (
    DegenerateSourceError,
    EmptyManifestError,
    NoiseTooShortError,
    NumericalOverflowError,
    SeparationError,
    ShapeMismatchError,
    TrainingDivergedError,
    UnsupportedSampleRateError,
)
from .neural import ModelParameters, backward, forward_pass, init_parameters
from .normalization import FeatureNormalizer, fit_normalizer
from .targets import MethodConfig, Objective, TrainingPair, as_objective, build_training_pair
from .utils import resolve_worker_count, write_run_manifest
from .wav_io import read_wav

logger = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["clean_path", "noise_path", "snr_db", "seed", "condition"]
DEFAULT_CONDITION = "matched"

# Learning-rate multiplier per objective; objectives not listed use 1.
OBJECTIVE_LR_SCALE = {"masking": 10.0}


@dataclass
class MixtureSpec:
    """One manifest line: clean file, noise file, target SNR, offset seed."""
    clean_source: str
    noise_source: str
    snr_db: float
    seed: int = 0
    condition: str = DEFAULT_CONDITION


@dataclass
class Utterance:
    """A mixed utterance held in memory."""
    clean: Waveform
    noisy: Waveform
    noise: Optional[Waveform] = None
    snr_db: Optional[float] = None
    condition: str = DEFAULT_CONDITION
    name: str = ""


@dataclass
class TrainingConfig:
    """Hyperparameters of one training run."""
    method: MethodConfig
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 4
    momentum: float = 0.9
    clip_norm: float = 5.0
    seed: int = 0
    checkpoint_every: int = 10
    validation_fraction: float = 0.1
    layer_count: int = 2
    cell_count: int = 64
    workers: Optional[int] = None
    warmup_epochs: int = 0
    objective_lr_scale: Dict[str, float] = field(default_factory=lambda: dict(OBJECTIVE_LR_SCALE))

    def __post_init__(self):
        for name in ("epochs", "batch_size", "layer_count", "cell_count"):
            if int(getattr(self, name)) <= 0:
                raise SeparationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.learning_rate < 0 or self.clip_norm <= 0:
            raise SeparationError("learning_rate must be >= 0 and clip_norm > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise SeparationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise SeparationError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.checkpoint_every < 0:
            raise SeparationError("checkpoint_every must be >= 0 (0 disables cadence checkpoints)")
        if self.warmup_epochs < 0:
            raise SeparationError(f"warmup_epochs must be >= 0, got {self.warmup_epochs}")
        for key, scale in self.objective_lr_scale.items():
            as_objective(key)
            if not scale > 0:
                raise SeparationError(f"learning-rate scale for {key} must be positive, got {scale}")

    def step_size(self, epoch: int) -> float:
        """Learning rate used during ``epoch`` (1-based): objective scale times linear warmup."""
        scales = {as_objective(key): value for key, value in self.objective_lr_scale.items()}
        scale = scales.get(self.method.objective, 1.0)
        warmup = min(1.0, epoch / self.warmup_epochs) if self.warmup_epochs else 1.0
        return self.learning_rate * scale * warmup


@dataclass
class LossReport:
    epoch: int
    train_loss: float
    validation_loss: Optional[float] = None


@dataclass
class TrainingResult:
    params: ModelParameters
    normalizer: FeatureNormalizer
    reports: List[LossReport] = field(default_factory=list)
    checkpoint: Optional[Checkpoint] = None
    written: List[Path] = field(default_factory=list)


# =============================================================================
# MANIFESTS AND MIXING
# =============================================================================

def load_manifest(path: Union[str, Path]) -> List[MixtureSpec]:
    """
    Parse a tab-separated mixture manifest.

    Each line is ``clean_path  noise_path  snr_db  seed`` with an optional fifth
    column naming the noise condition. Relative paths resolve against the
    manifest's directory; lines starting with ``#`` are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        frame = pd.read_csv(path, sep="\t", header=None, names=MANIFEST_COLUMNS,
                            dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise EmptyManifestError(str(path))
    except pd.errors.ParserError as exc:
        raise SeparationError(f"{path}: malformed manifest ({exc})") from exc
    frame = frame.fillna("")
    frame = frame[~frame.clean_path.str.lstrip().str.startswith("#")]
    if frame.empty:
        raise EmptyManifestError(str(path))

    specs = []
    for row in frame.itertuples():
        line_no = row.Index + 1
        if not row.clean_path or not row.noise_path or not row.snr_db:
            raise SeparationError(f"{path}: line {line_no} needs clean, noise and snr_db columns")
        try:
            snr_db = float(row.snr_db)
            seed = int(row.seed) if row.seed else 0
        except ValueError as exc:
            raise SeparationError(f"{path}: line {line_no}: {exc}") from exc
        specs.append(MixtureSpec(
            clean_source=str(_resolve(path.parent, row.clean_path)),
            noise_source=str(_resolve(path.parent, row.noise_path)),
            snr_db=snr_db,
            seed=seed,
            condition=row.condition or DEFAULT_CONDITION,
        ))
    logger.info(f"Loaded {len(specs)} mixtures from {path}")
    return specs


def _resolve(base: Path, entry: str) -> Path:
    candidate = Path(entry)
    return candidate if candidate.is_absolute() else base / candidate


def write_manifest(path: Union[str, Path], specs: Sequence[MixtureSpec], include_condition: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [{
        "clean_path": spec.clean_source,
        "noise_path": spec.noise_source,
        "snr_db": repr(float(spec.snr_db)),
        "seed": str(spec.seed),
        "condition": spec.condition,
    } for spec in specs]
    columns = MANIFEST_COLUMNS if include_condition else MANIFEST_COLUMNS[:4]
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, sep="\t", header=False, index=False,
                                                        columns=columns, lineterminator="\n")
    return path


def signal_power(w: Union[Waveform, np.ndarray]) -> float:
    samples = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    return float(np.mean(samples ** 2))


def select_noise_segment(noise: Waveform, length: int, seed: int) -> Tuple[int, np.ndarray]:
    """Seed-determined offset and the noise segment of ``length`` samples starting there."""
    if len(noise) < length:
        raise NoiseTooShortError(len(noise), length)
    offset = int(np.random.default_rng(seed).integers(0, len(noise) - length + 1))
    return offset, noise.samples[offset:offset + length]


def noise_gain(clean: Waveform, segment: np.ndarray, snr_db: float) -> float:
    """Gain making 10 log10(P_clean / P_noise) equal ``snr_db``."""
    clean_power = signal_power(clean)
    if clean_power == 0.0:
        raise DegenerateSourceError()
    noise_power = signal_power(segment)
    if noise_power == 0.0:
        raise DegenerateSourceError("noise segment is silent")
    return float(np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0))))


@dataclass
class Mixture:
    """Result of mix_at_snr: the noisy utterance, the scaled noise and the choices behind it."""
    noisy: Waveform
    noise: Waveform
    offset: int
    gain: float


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, seed: int = 0) -> Mixture:
    """
    Add a scaled noise segment to a clean utterance at a prescribed SNR.

    Powers are mean squared amplitudes over the full clean utterance length.
    No clipping happens here; it is applied only when writing WAV files.

    Args:
        clean: Clean utterance
        noise: Noise recording, at least as long as ``clean``
        snr_db: Target SNR in dB
        seed: Selects the noise segment offset

    Returns:
        Mixture whose waveforms have the length of ``clean``, with the noise
        offset in samples and the gain applied to the segment
    """
    if clean.sample_rate != noise.sample_rate:
        raise UnsupportedSampleRateError(noise.sample_rate, clean.sample_rate)
    offset, segment = select_noise_segment(noise, len(clean), seed)
    gain = noise_gain(clean, segment, snr_db)
    scaled = segment * gain
    return Mixture(noisy=Waveform(clean.samples + scaled, clean.sample_rate),
                   noise=Waveform(scaled, clean.sample_rate), offset=offset, gain=gain)


def load_utterance(spec: MixtureSpec) -> Utterance:
    """Read the WAV files a manifest line names and mix them."""
    clean = read_wav(spec.clean_source)
    noise = read_wav(spec.noise_source)
    mix = mix_at_snr(clean, noise, spec.snr_db, spec.seed)
    return Utterance(clean=clean, noisy=mix.noisy, noise=mix.noise, snr_db=spec.snr_db,
                     condition=spec.condition, name=Path(spec.clean_source).stem)


# =============================================================================
# LOSSES
# =============================================================================

def _values(x: Union[FeatureMatrix, np.ndarray]) -> np.ndarray:
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def squared_loss(a: Union[FeatureMatrix, np.ndarray], b: Union[FeatureMatrix, np.ndarray]) -> float:
    """Sum over frames of the squared 2-norm of per-frame differences, divided by the frame count."""
    a, b = _values(a), _values(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(a.shape, b.shape)
    return float(np.sum((a - b) ** 2) / a.shape[0])


def objective_loss(config: MethodConfig, output: Union[FeatureMatrix, np.ndarray], pair: TrainingPair,
                   normalizer: Optional[FeatureNormalizer] = None) -> Tuple[float, np.ndarray]:
    """
    Loss of one utterance under the method's objective, with dLoss/dOutput.

    - masking: squared_loss(target mask, output)
    - mapping: squared_loss(clean, output), with clean in the normalizer's target space
    - signal approximation: squared_loss(clean, noisy_output * output)

    Args:
        config: Method whose objective applies
        output: Network output, frames x output dims
        pair: Training pair of the utterance
        normalizer: Statistics for mapping targets (None keeps raw targets)

    Returns:
        (loss, gradient with the shape of ``output``)
    """
    if config != pair.config:
        raise SeparationError(f"pair was built for '{pair.config.name}', not '{config.name}'")
    out = _values(output)
    target = pair.target.values
    if out.shape != target.shape:
        raise ShapeMismatchError(target.shape, out.shape, "model output shape")
    frames = out.shape[0]

    if config.objective is Objective.SIGNAL_APPROXIMATION:
        noisy = pair.noisy_output.values
        residual = noisy * out - target
        return float(np.sum(residual ** 2) / frames), 2.0 * residual * noisy / frames

    if config.objective is Objective.MAPPING and normalizer is not None:
        target = normalizer.normalize_target(target)
    residual = out - target
    return float(np.sum(residual ** 2) / frames), 2.0 * residual / frames


# =============================================================================
# OPTIMIZATION LOOP
# =============================================================================

def split_indices(count: int, validation_fraction: float, seed: int) -> Tuple[List[int], List[int]]:
    """Deterministic train/validation split by utterance index."""
    order = np.random.default_rng(seed).permutation(count)
    n_val = int(np.floor(count * validation_fraction))
    if n_val >= count:
        n_val = count - 1
    return sorted(int(i) for i in order[n_val:]), sorted(int(i) for i in order[:n_val])


class Trainer:
    """
    Runs the training loop for one method.

    Usage:
        trainer = Trainer(config, output_dir="runs/log-fbank-masking")
        result = trainer.train(dataset)
    """

    def __init__(self, config: TrainingConfig, output_dir: Optional[Union[str, Path]] = None,
                 bank: Optional[MelFilterbank] = None, params: Optional[ModelParameters] = None,
                 on_epoch: Optional[Callable[[LossReport], None]] = None):
        self.config = config
        self.method = config.method
        self.output_dir = Path(output_dir) if output_dir else None
        self.bank = bank
        self.initial_params = params
        self.on_epoch = on_epoch
        self.workers = resolve_worker_count(config.workers)
        self.normalizer: Optional[FeatureNormalizer] = None

    # -- data ---------------------------------------------------------------

    def _prepare(self, item: Union[MixtureSpec, Utterance]) -> TrainingPair:
        utterance = load_utterance(item) if isinstance(item, MixtureSpec) else item
        return build_training_pair(utterance.clean, utterance.noisy, self.method, self.bank)

    def prepare_pairs(self, dataset: Sequence[Union[MixtureSpec, Utterance]]) -> List[TrainingPair]:
        if not dataset:
            raise EmptyManifestError()
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(self._prepare, dataset))

    # -- per-utterance passes -------------------------------------------------

    def _network_input(self, pair: TrainingPair) -> np.ndarray:
        return self.normalizer.normalize_input(pair.input.values)

    def utterance_loss(self, params: ModelParameters, pair: TrainingPair) -> float:
        output = forward_pass(params, self.method.head_kind, self._network_input(pair)).output
        return objective_loss(self.method, output, pair, self.normalizer)[0]

    def utterance_gradient(self, params: ModelParameters, pair: TrainingPair) -> Tuple[float, ModelParameters]:
        head = self.method.head_kind
        cache = forward_pass(params, head, self._network_input(pair))
        loss, grad_output = objective_loss(self.method, cache.output, pair, self.normalizer)
        return loss, backward(params, head, None, grad_output, cache=cache)

    def split_loss(self, params: ModelParameters, pairs: Sequence[TrainingPair]) -> Optional[float]:
        """Frame-weighted mean per-frame loss over ``pairs``."""
        if not pairs:
            return None
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            losses = list(pool.map(lambda p: self.utterance_loss(params, p), pairs))
        frames = np.array([p.frames for p in pairs], dtype=np.float64)
        return float(np.dot(losses, frames) / frames.sum())

    # -- main loop ------------------------------------------------------------

    def train(self, dataset: Sequence[Union[MixtureSpec, Utterance]]) -> TrainingResult:
        """
        Train on ``dataset`` and return the final parameters with one LossReport per epoch.

        Raises:
            EmptyManifestError: if ``dataset`` is empty
            TrainingDivergedError: on a non-finite loss, gradient or activation
        """
        config = self.config
        logger.info(f"Training '{self.method.name}' (seed={config.seed}, epochs={config.epochs}, "
                    f"lr={config.learning_rate}, step={config.step_size(config.epochs):g}, "
                    f"warmup={config.warmup_epochs}, batch={config.batch_size}, workers={self.workers})")

        pairs = self.prepare_pairs(dataset)
        train_idx, val_idx = split_indices(len(pairs), config.validation_fraction, config.seed)
        train_pairs = [pairs[i] for i in train_idx]
        val_pairs = [pairs[i] for i in val_idx]
        logger.info(f"Split {len(pairs)} utterances: {len(train_pairs)} train, {len(val_pairs)} validation")

        mapping = self.method.objective is Objective.MAPPING
        self.normalizer = fit_normalizer(
            (p.input.values for p in train_pairs),
            (p.target.values for p in train_pairs) if mapping else None,
        )

        input_dim = pairs[0].input.dims
        output_dim = pairs[0].target.dims
        params = self.initial_params.copy() if self.initial_params is not None else init_parameters(
            config.layer_count, config.cell_count, input_dim, output_dim, seed=config.seed)
        velocity = [np.zeros_like(t) for t in params.tensors()]

        rng = np.random.default_rng(config.seed)
        reports: List[LossReport] = []
        written: List[Path] = []
        best_loss = np.inf

        for epoch in range(1, config.epochs + 1):
            order = [train_pairs[i] for i in rng.permutation(len(train_pairs))]
            step = config.step_size(epoch)
            epoch_loss, epoch_frames = 0.0, 0
            for batch_no, start in enumerate(range(0, len(order), config.batch_size), start=1):
                batch = order[start:start + config.batch_size]
                try:
                    with ThreadPoolExecutor(max_workers=self.workers) as pool:
                        results = list(pool.map(lambda p: self.utterance_gradient(params, p), batch))
                except NumericalOverflowError as exc:
                    raise TrainingDivergedError(epoch, batch_no, float("nan")) from exc

                batch_grads = params.zeros_like()
                for (loss, grads), pair in zip(results, batch):
                    if not np.isfinite(loss):
                        raise TrainingDivergedError(epoch, batch_no, loss)
                    epoch_loss += loss * pair.frames
                    epoch_frames += pair.frames
                    for acc, g in zip(batch_grads.tensors(), grads.tensors()):
                        acc += g

                grad_tensors = [g / len(batch) for g in batch_grads.tensors()]
                norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grad_tensors)))
                if not np.isfinite(norm):
                    raise TrainingDivergedError(epoch, batch_no, norm)
                if norm > config.clip_norm:
                    grad_tensors = [g * (config.clip_norm / norm) for g in grad_tensors]

                for tensor, v, g in zip(params.tensors(), velocity, grad_tensors):
                    v *= config.momentum
                    v -= step * g
                    tensor += v

            report = LossReport(epoch=epoch, train_loss=epoch_loss / epoch_frames,
                                validation_loss=self.split_loss(params, val_pairs))
            reports.append(report)
            val_text = "n/a" if report.validation_loss is None else f"{report.validation_loss:.6f}"
            logger.info(f"Epoch {epoch}/{config.epochs}: train_loss={report.train_loss:.6f} "
                        f"validation_loss={val_text}")
            if self.on_epoch:
                self.on_epoch(report)

            if self.output_dir is not None:
                selection = report.validation_loss if report.validation_loss is not None else report.train_loss
                if selection < best_loss:
                    best_loss = selection
                    self._write_checkpoint("checkpoint_best.sepf", params, epoch, written)
                if config.checkpoint_every and epoch % config.checkpoint_every == 0:
                    self._write_checkpoint(f"checkpoint_epoch_{epoch:04d}.sepf", params, epoch, written)

        result = TrainingResult(params=params, normalizer=self.normalizer, reports=reports,
                                checkpoint=self.make_checkpoint(params, config.epochs), written=written)
        if self.output_dir is not None:
            self._write_checkpoint("checkpoint_final.sepf", params, config.epochs, written)
            written.append(write_loss_log(self.output_dir / "loss_log.tsv", reports))
            write_run_manifest(self.output_dir, written, {"method": self.method.name, "seed": config.seed})
            logger.info(f"Training outputs written to {self.output_dir}")
        return result

    def make_checkpoint(self, params: ModelParameters, epoch: int) -> Checkpoint:
        return Checkpoint(
            params=params.copy(),
            method=self.method,
            normalizer=self.normalizer,
            metadata={"epoch": epoch, "seed": self.config.seed},
        )

    def _write_checkpoint(self, name: str, params: ModelParameters, epoch: int, written: List[Path]) -> None:
        path = save_checkpoint(self.output_dir / name, self.make_checkpoint(params, epoch))
        if path not in written:
            written.append(path)
        logger.info(f"Wrote checkpoint {path}")


def write_loss_log(path: Union[str, Path], reports: Sequence[LossReport]) -> Path:
    """Tab-separated epoch, train_loss, validation_loss (empty when there is no validation split)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([{"epoch": r.epoch, "train_loss": r.train_loss, "validation_loss": r.validation_loss}
                          for r in reports], columns=["epoch", "train_loss", "validation_loss"])
    frame.to_csv(path, sep="\t", index=False, float_format="%.10g", lineterminator="\n")
    return path


def train(dataset: Sequence[Union[MixtureSpec, Utterance]], config: TrainingConfig,
          output_dir: Optional[Union[str, Path]] = None, bank: Optional[MelFilterbank] = None) -> TrainingResult:
    """
    Train a model for ``config.method``.

    Args:
        dataset: Mixture specs (read from disk) or in-memory utterances
        config: Training hyperparameters
        output_dir: Where checkpoints and the loss log go (None writes nothing)
        bank: Mel filterbank override

    Returns:
        TrainingResult with final parameters, normalizer and per-epoch reports
    """
    return Trainer(config, output_dir=output_dir, bank=bank).train(dataset)

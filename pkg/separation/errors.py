"""
Exception types raised by the separation front-end.

Every failure the pipeline can report has its own class so callers (the CLI in
particular) can distinguish them, while still being catchable as ``ValueError``.
"""

from typing import Iterable, Optional


class SeparationError(ValueError):
    """Base class for all front-end errors."""


class SignalTooShortError(SeparationError):
    def __init__(self, length: int, window_len: int):
        super().__init__(f"signal too short: {length} samples < window of {window_len}")
        self.length = length
        self.window_len = window_len


class InvalidWindowError(SeparationError):
    def __init__(self, window_len: int):
        super().__init__(f"invalid window: {window_len} is not a power of two")
        self.window_len = window_len


class ColaViolationError(SeparationError):
    def __init__(self, window_len: int, frame_hop: int):
        super().__init__(
            f"COLA violated: window_len={window_len}, frame_hop={frame_hop} "
            f"(hop must be window_len/2 with a power-of-two window)"
        )


class UnsupportedSampleRateError(SeparationError):
    def __init__(self, sample_rate: int, expected: int):
        super().__init__(f"unsupported sample rate {sample_rate} Hz (expected {expected} Hz, no resampling)")
        self.sample_rate = sample_rate


class DomainMismatchError(SeparationError):
    def __init__(self, message: str):
        super().__init__(f"domain mismatch: {message}")


class ShapeMismatchError(SeparationError):
    def __init__(self, expected, actual, what: str = "shape"):
        super().__init__(f"{what} mismatch: expected {expected}, got {actual}")


class NotInvertibleError(SeparationError):
    def __init__(self, domain: str):
        super().__init__(f"not invertible: {domain} estimates cannot be resynthesized to a waveform")
        self.domain = domain


class NumericalOverflowError(SeparationError):
    def __init__(self, where: str):
        super().__init__(f"numerical overflow in {where}")


class TrainingDivergedError(SeparationError):
    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class DegenerateSourceError(SeparationError):
    def __init__(self, what: str = "clean utterance is silent"):
        super().__init__(f"degenerate source: {what}")


class NoiseTooShortError(SeparationError):
    def __init__(self, noise_len: int, clean_len: int):
        super().__init__(f"noise too short: {noise_len} samples < clean utterance of {clean_len}")


class EmptyManifestError(SeparationError):
    def __init__(self, path: Optional[str] = None):
        super().__init__("empty manifest" + (f": {path}" if path else ""))


class InvalidMethodError(SeparationError):
    def __init__(self, requested: str, valid: Iterable[str]):
        valid = list(valid)
        super().__init__(
            f"invalid method '{requested}'; valid methods are: " + ", ".join(f"'{v}'" for v in valid)
        )
        self.requested = requested
        self.valid = valid


class ContainerFormatError(SeparationError):
    """Malformed or foreign checkpoint / feature-dump file."""

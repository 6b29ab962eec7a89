"""
This module contains utility functions for logging setup, JSON persistence,
artifact checksums and worker-count resolution used across the separation toolkit.
"""

import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

THREADS_ENV_VAR = "SEPF_THREADS"


def setup_logging(level: Union[str, int] = "INFO", log_file: Optional[Union[str, Path]] = None,
                  fmt: str = LOG_FORMAT) -> logging.Logger:
    """
    Configure the root logger with a console handler and an optional file handler.

    Calling it again replaces the handlers it installed earlier.

    Args:
        level: Console log level name or number
        log_file: Optional log file (appended, always at DEBUG)
        fmt: Record format string

    Returns:
        The root logger
    """
    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if getattr(handler, "_separation_handler", False):
            root_logger.removeHandler(handler)
            handler.close()

    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(fmt, DATE_FORMAT))
    console_handler._separation_handler = True
    root_logger.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, mode="a")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(fmt, DATE_FORMAT))
        file_handler._separation_handler = True
        root_logger.addHandler(file_handler)

    root_logger.setLevel(logging.DEBUG if log_file else level)
    return root_logger


def save_json(data: Dict[str, Any], filename: Union[str, Path], create_dirs: bool = True) -> str:
    """
    Save a dictionary as JSON with sorted keys.

    Args:
        data: Dictionary to save
        filename: Output file path
        create_dirs: If True, create parent directories if they don't exist

    Returns:
        Path to saved file as string
    """
    file_path = Path(filename)
    if create_dirs:
        file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write("\n")
    logger.debug(f"Data saved to {file_path}")
    return str(file_path)


def calculate_checksum(file_path: Union[str, Path]) -> str:
    """Calculate SHA-256 checksum of a file."""
    sha256_hash = hashlib.sha256()
    with open(file_path, "rb") as f:
        for byte_block in iter(lambda: f.read(4096), b""):
            sha256_hash.update(byte_block)
    return sha256_hash.hexdigest()


def write_run_manifest(output_dir: Union[str, Path], files: Iterable[Union[str, Path]],
                       info: Optional[Dict[str, Any]] = None) -> str:
    """
    Record SHA-256 checksums of written artifacts in ``run_manifest.json``.

    Paths are stored relative to ``output_dir`` when they live under it.
    """
    output_dir = Path(output_dir)
    checksums = {}
    for file_path in files:
        file_path = Path(file_path)
        try:
            key = str(file_path.relative_to(output_dir))
        except ValueError:
            key = str(file_path)
        checksums[key] = calculate_checksum(file_path)
        logger.debug(f"sha256 {key} {checksums[key]}")
    return save_json({"files": checksums, **(info or {})}, output_dir / "run_manifest.json")


def resolve_worker_count(requested: Optional[int] = None) -> int:
    """
    Number of worker threads to use.

    ``SEPF_THREADS`` caps the result; without a request the cap (or the CPU
    count) is used.
    """
    cap = None
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV_VAR}={raw!r}")

    workers = int(requested) if requested else (cap or os.cpu_count() or 1)
    if cap is not None:
        workers = min(workers, cap)
    return max(1, workers)

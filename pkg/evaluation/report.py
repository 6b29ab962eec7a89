"""
Report Module

Renders evaluation records as an aligned text table and as line-delimited JSON.
Both renderings depend only on the records, so identical inputs give
byte-identical files.
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import pandas as pd

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ["method", "condition", "snr_db", "metric", "value"]

REPORT_NOTE = (
    "# Word error rates need a full recognizer and a real corpus and are not computed.\n"
    "# Feature-domain MSE (mse:*, asr_mse*) and SI-SDR (dB) are reported instead.\n"
    "# asr_mse is measured on log-fbank features; *_waveform rows go through noisy-phase resynthesis.\n"
)


def render_text(records: pd.DataFrame) -> str:
    """Aligned-column table, one row per record, values to 4 decimals."""
    if records.empty:
        return REPORT_NOTE + "(no records)\n"
    table = records[RECORD_COLUMNS].to_string(
        index=False,
        justify="left",
        formatters={"value": lambda v: f"{v:.4f}"},
    )
    return REPORT_NOTE + table + "\n"


def render_jsonl(records: pd.DataFrame) -> str:
    """One JSON object per line with the record fields."""
    if records.empty:
        return ""
    text = records[RECORD_COLUMNS].to_json(orient="records", lines=True, double_precision=10)
    return text if text.endswith("\n") else text + "\n"


def write_report(records: pd.DataFrame, prefix: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write ``PREFIX.txt`` and ``PREFIX.jsonl``.

    Returns:
        (text path, jsonl path)
    """
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    text_path = prefix.with_name(prefix.name + ".txt")
    jsonl_path = prefix.with_name(prefix.name + ".jsonl")
    text_path.write_text(render_text(records), encoding="utf-8")
    jsonl_path.write_text(render_jsonl(records), encoding="utf-8")
    logger.info(f"Report written to {text_path} and {jsonl_path}")
    return text_path, jsonl_path


def read_jsonl(path: Union[str, Path]) -> pd.DataFrame:
    """Load a record file back into a DataFrame with string SNR labels."""
    return pd.read_json(path, orient="records", lines=True, dtype={"snr_db": str})

#!/usr/bin/env python3
"""
Command-line surface of the separation toolkit.

Subcommands:
  mix      Generate noisy mixtures (and scaled-noise references) from a manifest
  train    Train one method from a YAML run configuration
  enhance  Enhance a WAV file with a checkpoint
  eval     Score checkpoints, the noisy baseline and oracle masks on a manifest
  inspect  Print headers of SEPX feature dumps and SEPF checkpoints
  synth    Write the deterministic synthetic corpus
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from .config_manager import ConfigManager
from .containers import inspect_container, load_checkpoint, write_feature_dump
from .enhancement import Enhancer, unit_mask
from .errors import SeparationError
from .training import Trainer, load_manifest, mix_at_snr
from .utils import setup_logging, write_run_manifest
from .wav_io import read_wav, write_wav

logger = logging.getLogger(__name__)

RESOLVED_MANIFEST = "resolved_manifest.tsv"


def parse_arguments(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="separation",
        description="Supervised speech separation front-end",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py synth corpus/
  python main.py mix corpus/train.tsv mixtures/
  python main.py train config/config.yaml --set training.epochs=5
  python main.py enhance runs/default/checkpoint_final.sepf noisy.wav --wav-out enhanced.wav
  python main.py eval --checkpoint runs/default/checkpoint_final.sepf --manifest corpus/eval.tsv --report-out reports/eval
  python main.py inspect enhanced.sepx
        """
    )
    parser.add_argument("--log-level", default=None, help="Console log level (default: INFO or the config's)")
    parser.add_argument("--log-file", default=None, help="Also write DEBUG logs to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    mix = sub.add_parser("mix", help="Write noisy and scaled-noise WAVs for every manifest line")
    mix.add_argument("manifest", help="clean<TAB>noise<TAB>snr_db<TAB>seed manifest")
    mix.add_argument("out_dir", help="Output directory")

    train = sub.add_parser("train", help="Train one method")
    train.add_argument("config", help="YAML run configuration")
    train.add_argument("--override-file", action="append", default=[],
                       help="YAML file deep-merged over the configuration (repeatable)")
    train.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Override a configuration key, e.g. training.epochs=5 (repeatable)")
    train.add_argument("--manifest", help="Training manifest (overrides training.manifest)")
    train.add_argument("--output-dir", help="Output directory (overrides global.paths.output_dir)")

    enhance = sub.add_parser("enhance", help="Enhance one WAV file")
    enhance.add_argument("checkpoint", help="SEPF checkpoint")
    enhance.add_argument("wav_in", help="Noisy 16 kHz mono WAV")
    enhance.add_argument("--features-out", help="Write the enhanced features as a SEPX dump")
    enhance.add_argument("--wav-out", help="Write the noisy-phase resynthesis as WAV")
    enhance.add_argument("--via-waveform", action="store_true",
                         help="Features are log-fbank recomputed from the resynthesized waveform")
    enhance.add_argument("--asr-features", action="store_true",
                         help="Features are log-fbank converted along the feature path")
    enhance.add_argument("--unit-mask", action="store_true",
                         help="Diagnostic: replace the predicted mask by all ones")

    evaluate = sub.add_parser("eval", help="Evaluate checkpoints on a manifest")
    evaluate.add_argument("--checkpoint", nargs="+", required=True, help="SEPF checkpoint(s)")
    evaluate.add_argument("--manifest", required=True, help="Evaluation manifest (5th column: condition)")
    evaluate.add_argument("--report-out", required=True, help="Report prefix; writes PREFIX.txt and PREFIX.jsonl")
    evaluate.add_argument("--config", help="YAML configuration for the evaluation section")
    evaluate.add_argument("--include-clean", action="store_true", help="Also evaluate on the clean utterances")

    inspect = sub.add_parser("inspect", help="Print container headers")
    inspect.add_argument("files", nargs="+", help="SEPX or SEPF files")

    synth = sub.add_parser("synth", help="Write the synthetic corpus")
    synth.add_argument("out_dir", help="Corpus directory")
    synth.add_argument("--train-count", type=int, default=50, help="Training mixtures (default: 50)")
    synth.add_argument("--eval-count", type=int, default=12, help="Evaluation mixtures per condition (default: 12)")
    synth.add_argument("--duration", type=float, default=2.0, help="Utterance length in seconds (default: 2.0)")
    synth.add_argument("--seed", type=int, default=0, help="Corpus seed (default: 0)")

    return parser.parse_args(argv)


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def cmd_mix(manifest: str, out_dir: str) -> int:
    """Mix every manifest line; any failed line makes the exit status nonzero."""
    from evaluation.metrics import snr_db

    specs = load_manifest(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, written, failures = [], [], 0

    for index, spec in enumerate(specs):
        try:
            clean = read_wav(spec.clean_source)
            noise = read_wav(spec.noise_source)
            mix = mix_at_snr(clean, noise, spec.snr_db, spec.seed)

            noisy_path = out / f"mix_{index:04d}_noisy.wav"
            noise_path = out / f"mix_{index:04d}_noise.wav"
            write_wav(noisy_path, mix.noisy)
            write_wav(noise_path, mix.noise)
            written.extend([noisy_path, noise_path])

            achieved = snr_db(clean, mix.noise)
            logger.info(f"[{index}] {Path(spec.clean_source).name} + {Path(spec.noise_source).name} "
                        f"seed={spec.seed} offset={mix.offset} target={spec.snr_db:g} dB achieved={achieved:.4f} dB")
            rows.append({
                "index": index,
                "clean_path": spec.clean_source,
                "noise_path": spec.noise_source,
                "snr_db": spec.snr_db,
                "seed": spec.seed,
                "condition": spec.condition,
                "noisy_path": noisy_path.name,
                "noise_scaled_path": noise_path.name,
                "noise_offset": mix.offset,
                "noise_gain": mix.gain,
                "achieved_snr_db": achieved,
            })
        except (SeparationError, OSError, RuntimeError) as e:
            failures += 1
            logger.error(f"[{index}] {spec.clean_source}: {e}")

    resolved = out / RESOLVED_MANIFEST
    pd.DataFrame(rows).to_csv(resolved, sep="\t", index=False, float_format="%.17g", lineterminator="\n")
    written.append(resolved)
    write_run_manifest(out, written, {"manifest": str(manifest)})
    if failures:
        logger.error(f"{failures} of {len(specs)} manifest lines failed")
        return 1
    logger.info(f"Wrote {len(specs)} mixtures to {out}")
    return 0


def cmd_train(config_path: str, override_files: List[str], overrides: List[str],
              manifest: Optional[str] = None, output_dir: Optional[str] = None) -> int:
    config_mgr = ConfigManager(config_path)
    for override_file in override_files:
        config_mgr.apply_override_file(override_file)
    if overrides:
        config_mgr.apply_cli_overrides(overrides)

    training_config = config_mgr.get_training_config()
    if not config_mgr.validate_configuration():
        return 1

    manifest_path = Path(manifest) if manifest else config_mgr.get_manifest_path()
    if manifest_path is None:
        raise SeparationError("no training manifest: set training.manifest or pass --manifest")
    out = Path(output_dir) if output_dir else config_mgr.get_output_dir()

    logger.info(f"Method '{training_config.method.name}', seed={training_config.seed}, "
                f"architecture {training_config.layer_count}x{training_config.cell_count}")
    dataset = load_manifest(manifest_path)
    Trainer(training_config, output_dir=out).train(dataset)
    return 0


def cmd_enhance(checkpoint_path: str, wav_in: str, features_out: Optional[str], wav_out: Optional[str],
                via_waveform: bool, asr_features: bool, use_unit_mask: bool) -> int:
    if not features_out and not wav_out:
        raise SeparationError("nothing to write: pass --features-out and/or --wav-out")

    checkpoint = load_checkpoint(checkpoint_path)
    enhancer = Enhancer(checkpoint, mask_override=unit_mask if use_unit_mask else None)
    noisy = read_wav(wav_in)
    logger.info(f"Enhancing {wav_in} with '{checkpoint.method.name}' (seed={checkpoint.metadata.get('seed', 0)})")

    if wav_out:
        enhanced = enhancer.enhance_waveform(noisy)
        write_wav(wav_out, enhanced)
        logger.info(f"Wrote {wav_out} ({len(enhanced)} samples)")

    if features_out:
        if via_waveform:
            features = enhancer.enhance_to_asr_features(noisy, via_waveform=True)
        elif asr_features:
            features = enhancer.enhance_to_asr_features(noisy, via_waveform=False)
        else:
            features = enhancer.enhance_features(noisy)
        write_feature_dump(features_out, features)
        logger.info(f"Wrote {features_out} ({features.domain.value}, {features.frames}x{features.dims})")
    return 0


def cmd_eval(checkpoints: List[str], manifest: str, report_out: str, config_path: Optional[str],
             include_clean: bool) -> int:
    from evaluation.runner import evaluate_run

    evaluation_config = ConfigManager(config_path).get_evaluation_config() if config_path else None
    include = include_clean or bool(evaluation_config and evaluation_config.include_clean)
    cap = evaluation_config.si_sdr_cap_db if evaluation_config else 100.0
    logger.info(f"Evaluating {len(checkpoints)} checkpoint(s) on {manifest} (seeds from manifest lines)")
    evaluate_run(checkpoints, manifest, report_path=report_out, include_clean=include, si_sdr_cap_db=cap)
    return 0


def cmd_inspect(files: List[str]) -> int:
    for path in files:
        header = inspect_container(path)
        print(f"== {path}")
        print(json.dumps(header, indent=2, sort_keys=True))
    return 0


def cmd_synth(out_dir: str, train_count: int, eval_count: int, duration: float, seed: int) -> int:
    from evaluation.synthetic import write_corpus

    paths = write_corpus(out_dir, train_count=train_count, eval_count=eval_count, duration_s=duration, seed=seed)
    print(f"train manifest: {paths.train_manifest}")
    print(f"eval manifest:  {paths.eval_manifest}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    """Main execution function."""
    args = parse_arguments(argv)

    level = args.log_level
    log_file = args.log_file
    fmt = None
    if args.command == "train":
        try:
            logging_config = ConfigManager(args.config).get_logging_config()
        except SeparationError:
            # reported again, with logging configured, by cmd_train
            logging_config = {}
        level = level or logging_config.get("level")
        log_file = log_file or logging_config.get("log_file")
        fmt = logging_config.get("format")
    setup_logging(level or "INFO", log_file, **({"fmt": fmt} if fmt else {}))

    try:
        if args.command == "mix":
            return cmd_mix(args.manifest, args.out_dir)
        if args.command == "train":
            return cmd_train(args.config, args.override_file, args.overrides, args.manifest, args.output_dir)
        if args.command == "enhance":
            return cmd_enhance(args.checkpoint, args.wav_in, args.features_out, args.wav_out,
                               args.via_waveform, args.asr_features, args.unit_mask)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.manifest, args.report_out, args.config, args.include_clean)
        if args.command == "inspect":
            return cmd_inspect(args.files)
        if args.command == "synth":
            return cmd_synth(args.out_dir, args.train_count, args.eval_count, args.duration, args.seed)
        raise ValueError(f"Unknown command: {args.command}")

    except (SeparationError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

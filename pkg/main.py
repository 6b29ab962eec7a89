"""
Entry point for the separation toolkit.

    python main.py synth corpus/
    python main.py train config/config.yaml --set training.manifest=corpus/train.tsv

Run ``python main.py --help`` for every subcommand.
"""

import sys

from separation.cli import main

if __name__ == "__main__":
    sys.exit(main())

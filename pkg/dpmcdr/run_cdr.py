"""
Cross-domain recommender command line
=====================================

Subcommands:
- train      train on two interaction files (or the synthetic generator) and evaluate
- evaluate   re-evaluate a saved model.bin on the same split
- synth      write a synthetic two-domain corpus
- stats      users / items / interactions of interaction files
- gradcheck  finite-difference check of the full model

Example:
    python run_cdr.py train --synthetic --seed 1 --max-epochs 20 --output-dir runs/seed1
"""

import sys

from classes.CLI import run_cli


if __name__ == "__main__":
    sys.exit(run_cli(sys.argv[1:]))

#!/usr/bin/env python3
"""Sticky Markov-chain comparison of EM-like and SGD training.

Runs the paired 5-seed protocol at the default settings (1000 steps each)
and prints the seed medians of the final metrics.

    python3 scripts/run_sticky.py
    python3 scripts/run_sticky.py --seeds 0 --steps 200 --out runs/quick
"""

import sys

from attnlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["--experiment", "sticky", "--mode", "both", "--seeds", "0,1,2,3,4", "--out", "runs/sticky",
                   *sys.argv[1:]]))

#!/usr/bin/env python3
"""Toy experiment: EM-like and SGD training side by side for 100 steps.

    python3 scripts/run_toy.py --seeds 0,1,2 --out runs/toy

Any other experiment flag is passed through to the ``attnlab`` CLI.
"""

import sys

from attnlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["--experiment", "toy", "--mode", "both", "--out", "runs/toy", *sys.argv[1:]]))

#!/usr/bin/env python3
"""Finite-difference check of every closed-form gradient on 20 random instances."""

import sys

from attnlab.cli import main

if __name__ == "__main__":
    sys.exit(main(["--experiment", "gradcheck", "--out", "runs/gradcheck", *sys.argv[1:]]))

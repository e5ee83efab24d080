#!/usr/bin/env python3
"""Replica-constellation THP baselines vs the proposed QP at full load."""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    args = [
        "power-sweep",
        "--users", "32",
        "--modulation", "4",
        "--pe", "1e-3",
        "--schemes", "proposed", "ZF-THP", "opt-THP",
        "--out", "thp_comparison.csv",
    ]
    sys.exit(main(args + sys.argv[1:]))

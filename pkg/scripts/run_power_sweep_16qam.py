#!/usr/bin/env python3
"""Transmit power vs user count, 16-QAM at the pinned minimum scaling."""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    args = [
        "power-sweep",
        "--users", "4", "8", "16", "24", "32",
        "--modulation", "16",
        "--pe", "1e-3",
        "--schemes", "proposed", "ZF", "RZF",
        "--out", "power_sweep_16qam.csv",
    ]
    sys.exit(main(args + sys.argv[1:]))

#!/usr/bin/env python3
"""Transmit power vs user count, 4-QAM, Pe = 1e-3, N = 32, L = 8.

Reproduces the headline comparison: proposed QP precoding against ZF and
optimized RZF across loads up to alpha = 1.
"""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    args = [
        "power-sweep",
        "--users", "4", "8", "16", "24", "32",
        "--modulation", "4",
        "--pe", "1e-3",
        "--schemes", "proposed", "ZF", "RZF",
        "--out", "power_sweep_4qam.csv",
    ]
    sys.exit(main(args + sys.argv[1:]))

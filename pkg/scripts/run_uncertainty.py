#!/usr/bin/env python3
"""BER under imperfect CSI: precode on the estimate, receive via the truth.

Sweeps the normalized estimation error tau and compares the proposed
precoder against ZF at Pe = 1e-2.
"""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    args = [
        "uncertainty-sweep",
        "--users", "32",
        "--modulation", "4",
        "--pe", "1e-2",
        "--tau-db", "-25", "-18", "-12", "-8",
        "--schemes", "proposed", "ZF",
        "--out", "uncertainty.csv",
    ]
    sys.exit(main(args + sys.argv[1:]))

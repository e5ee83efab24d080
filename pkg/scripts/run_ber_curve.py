#!/usr/bin/env python3
"""Measured BER and transmit power across SEP targets at K = N = 32."""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    args = [
        "ber-curve",
        "--users", "32",
        "--modulation", "4",
        "--pe-values", "1e-2", "1e-3", "1e-4",
        "--schemes", "proposed", "ZF",
        "--out", "ber_curve.csv",
    ]
    sys.exit(main(args + sys.argv[1:]))

#!/usr/bin/env python3
"""Sparse (L = 8) vs dense (L = 32) spreading at full load K = N = 32.

The sparse code should track the dense one closely in power while cutting
the per-solve message traffic by the degree ratio.
"""

import sys

from mccdma.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    rc = main(["power-sweep", "--users", "32", "--modulation", "4",
               "--pe", "1e-3", "--nonzeros", "8", "--schemes", "proposed",
               "--out", "power_L8.csv"] + extra)
    rc |= main(["power-sweep", "--users", "32", "--modulation", "4",
                "--pe", "1e-3", "--nonzeros", "32", "--schemes", "proposed",
                "--out", "power_L32.csv"] + extra)
    sys.exit(rc)

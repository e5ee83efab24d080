"""Deterministic RNG stream derivation for reproducible experiments."""

import numpy as np

# Stream tags: every random draw in the harness comes from a Generator keyed
# by (master_seed, tag, *indices) so slot order never affects other slots.
SIGNATURE_STREAM = 0
CHANNEL_STREAM = 1
DATA_STREAM = 2
NOISE_STREAM = 3
PERTURB_STREAM = 4
CALIBRATION_STREAM = 5


def as_generator(seed):
    """Coerce an int / SeedSequence / Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derived_rng(master_seed, *key):
    """Generator for the stream identified by integer key parts.

    Identical (master_seed, key) always yields a bit-identical stream,
    independent of any other stream's consumption.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))

"""Frequency-selective fading channels and user-wise effective channels.

Each user sees an independent tapped delay line with exponentially decaying
tap powers normalized to unit total energy; the per-subcarrier response is
the DFT of the taps. The effective downlink channel chips the response with
the user's signature, so its support is exactly the signature support.
"""

from dataclasses import dataclass, field

import numpy as np

from .rngstreams import as_generator
from .signatures import build_factor_graph


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user tap vectors (K x Q) and subcarrier responses (K x N)."""

    taps: np.ndarray = field(repr=False)
    freq_response: np.ndarray = field(repr=False)

    @property
    def n_users(self):
        return self.taps.shape[0]

    @property
    def n_taps(self):
        return self.taps.shape[1]


@dataclass(frozen=True)
class EffectiveChannel:
    """Signature-weighted channel matrix H (K x N) plus its factor graph."""

    matrix: np.ndarray = field(repr=False)
    graph: object = field(repr=False)

    @property
    def n_users(self):
        return self.matrix.shape[0]

    @property
    def n_subcarriers(self):
        return self.matrix.shape[1]


def tap_variances(n_taps, decay_rate=0.25):
    """Exponentially decaying tap powers lambda_bar * exp(-q*rate), unit sum.

    The normalizer is the closed-form geometric sum, not an empirical one.
    """
    if n_taps < 1:
        raise ValueError("n_taps must be positive")
    q = np.arange(n_taps)
    decay = np.exp(-decay_rate * q)
    return decay / decay.sum()


def generate_channel(n_users, n_subcarriers, n_taps=8, decay_rate=0.25, seed=None):
    """Draw i.i.d. complex Gaussian taps per user and their DFT responses."""
    rng = as_generator(seed)
    var = tap_variances(n_taps, decay_rate)
    scale = np.sqrt(var / 2.0)
    raw = rng.standard_normal((n_users, n_taps, 2))
    taps = (raw[..., 0] + 1j * raw[..., 1]) * scale
    q = np.arange(n_taps)[:, None]
    n = np.arange(n_subcarriers)[None, :]
    phases = np.exp(-2j * np.pi * q * n / n_subcarriers)
    freq = taps @ phases
    taps.setflags(write=False)
    freq.setflags(write=False)
    return ChannelRealization(taps, freq)


def effective_channel(signature, channel):
    """Chip the per-subcarrier responses with the signature entries."""
    if channel.freq_response.shape != signature.entries.shape:
        raise ValueError("signature and channel dimensions disagree")
    h = signature.entries * channel.freq_response
    h.setflags(write=False)
    return EffectiveChannel(h, build_factor_graph(h))


def perturb_channel(effective, sigma_e, seed=None):
    """Add CN(0, sigma_e^2) estimation error on the support only.

    sigma_e = 0 returns the input unchanged; zeros stay exactly zero so the
    factor graph is preserved.
    """
    if sigma_e < 0:
        raise ValueError("sigma_e must be nonnegative")
    if sigma_e == 0.0:
        return effective
    rng = as_generator(seed)
    h = effective.matrix.copy()
    mask = h != 0
    nnz = int(mask.sum())
    raw = rng.standard_normal((nnz, 2))
    h[mask] += (raw[:, 0] + 1j * raw[:, 1]) * (sigma_e / np.sqrt(2.0))
    h.setflags(write=False)
    return EffectiveChannel(h, build_factor_graph(h))


def normalized_uncertainty(h_hat, h):
    """10 log10(|Hhat - H|_F^2 / |H|_F^2); -inf for a perfect estimate."""
    h_hat = np.asarray(h_hat)
    h = np.asarray(h)
    denom = np.linalg.norm(h) ** 2
    if denom == 0.0:
        raise ValueError("reference channel has zero energy")
    num = np.linalg.norm(h_hat - h) ** 2
    if num == 0.0:
        return float("-inf")
    return float(10.0 * np.log10(num / denom))


def save_effective_channel(effective, path):
    """Triplet text form with complex values as re/im pairs."""
    h = effective.matrix
    with open(path, "w") as fh:
        fh.write(f"{h.shape[0]} {h.shape[1]}\n")
        rows, cols = np.nonzero(h)
        for r, c in zip(rows, cols):
            v = h[r, c]
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def load_effective_channel(path):
    with open(path) as fh:
        k, n = (int(x) for x in fh.readline().split()[:2])
        h = np.zeros((k, n), dtype=complex)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            h[int(parts[0]), int(parts[1])] = float(parts[2]) + 1j * float(parts[3])
    h.setflags(write=False)
    return EffectiveChannel(h, build_factor_graph(h))

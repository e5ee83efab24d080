"""Per-user symbol detection and error counting.

Detectors are vectorized over receive arrays and return symbol indices in
1..M using the same Gray-per-axis layout the constellation module encodes.
Replica detection folds the receive value back into the fundamental modulo
cell first, so lattice-shifted points detect as their base symbol.
"""

import numpy as np

from .precoders import complex_modulo

# Amplitude rank (ascending level per axis) -> Gray index used by the encoder.
_AMP_RANK_TO_GRAY_PAM4 = np.array([0, 1, 3, 2], dtype=np.int64)

_POPCOUNT = np.array([bin(v).count("1") for v in range(16)], dtype=np.int64)


def detect_qam(y, m_order, beta):
    """Minimum-distance detection on the unit square (M=4) or 16-point grid."""
    y = np.asarray(y)
    if m_order == 4:
        g_re = (y.real >= 0.0).astype(np.int64)
        g_im = (y.imag >= 0.0).astype(np.int64)
        return 2 * g_re + g_im + 1
    if m_order == 16:
        rank_re = np.clip(np.floor((y.real + 4.0 * beta) / (2.0 * beta)), 0, 3)
        rank_im = np.clip(np.floor((y.imag + 4.0 * beta) / (2.0 * beta)), 0, 3)
        g_re = _AMP_RANK_TO_GRAY_PAM4[rank_re.astype(np.int64)]
        g_im = _AMP_RANK_TO_GRAY_PAM4[rank_im.astype(np.int64)]
        return 4 * g_re + g_im + 1
    raise ValueError(f"unsupported modulation order {m_order}")


def detect_replica(y, m_order, beta):
    """Fold by the modulo basis 2 sqrt(M) beta, then detect as plain QAM."""
    basis = 2.0 * np.sqrt(m_order) * beta
    return detect_qam(complex_modulo(y, basis), m_order, beta)


def bit_error_count(tx_symbols, rx_symbols):
    """Total differing bits between two arrays of 1-based symbol indices."""
    diff = (np.asarray(tx_symbols) - 1) ^ (np.asarray(rx_symbols) - 1)
    return int(_POPCOUNT[diff].sum())


def symbol_error_count(tx_symbols, rx_symbols):
    return int(np.count_nonzero(np.asarray(tx_symbols) != np.asarray(rx_symbols)))

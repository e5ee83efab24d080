"""Baseline precoders: zero forcing, optimized RZF, and Tomlinson-Harashima.

ZF inverts the channel at the scaled constellation points. RZF regularizes
the inverse and rescales, with (k1, k2) optimized per data vector against
the same per-user SEP polytopes the QP uses. The THP encoders work on the
replica (periodically extended) constellation: a sorted-QR successive
encoder pre-cancels inter-user interference with a per-user modulo, and the
optimized variant re-solves the transmit vector as a box-constrained QP
around the replica points the successive pass committed to.
"""

from dataclasses import dataclass, field

import numpy as np

from .constellation import (
    box_region,
    assemble_qp,
    complex_unstack,
    min_scaling_replica,
    solve_delta,
    symbol_vector,
)
from .solver import SolverOptions, solve


class RankDeficientChannelError(np.linalg.LinAlgError):
    """Channel matrix lacks full row rank; the slot should be redrawn."""


def zf_precode(h, d):
    """Least-norm x with H x = d, via the Gram system."""
    h = np.asarray(h)
    d = np.asarray(d)
    gram = h @ h.conj().T
    try:
        y = np.linalg.solve(gram, d)
    except np.linalg.LinAlgError as err:
        raise RankDeficientChannelError(str(err)) from None
    return h.conj().T @ y


@dataclass(frozen=True)
class RzfResult:
    x: np.ndarray = field(repr=False)
    k1: float
    k2: float
    power: float
    feasible: bool


def default_k2_grid(n_users, d, noise_sigma):
    """{0} plus 40 log-spaced points around the MMSE loading K sigma^2/|d|^2."""
    scale = n_users * noise_sigma**2 / float(np.vdot(d, d).real)
    return np.concatenate([[0.0], scale * np.logspace(-3.0, 2.0, 40)])


def _min_feasible_k1(v, regions, rtol=1e-9):
    """Smallest k1 >= 0 with k1 * v_k inside every user's polytope.

    Returns inf when some half-plane has the wrong sign or the equality
    constraints are mutually inconsistent along the ray.
    """
    lo, hi = 0.0, np.inf
    eq_vals = []
    for k, region in enumerate(regions):
        vr, vi = v[k].real, v[k].imag
        for plane in region.halfplanes:
            t = plane.coef_re * vr + plane.coef_im * vi
            if plane.bound < 0.0:
                if t >= 0.0:
                    return np.inf
                lo = max(lo, plane.bound / t)
            elif t > 0.0:
                hi = min(hi, plane.bound / t)
        for eq in region.equalities:
            t = vr if eq.axis == 0 else vi
            if t == 0.0:
                if eq.value != 0.0:
                    return np.inf
                continue
            req = eq.value / t
            if req < 0.0:
                return np.inf
            eq_vals.append(req)
    if eq_vals:
        k1 = eq_vals[0]
        tol = rtol * max(1.0, abs(k1))
        if max(eq_vals) - min(eq_vals) > tol:
            return np.inf
        if k1 < lo - tol or k1 > hi + tol:
            return np.inf
        return k1
    if lo > hi * (1.0 + rtol):
        return np.inf
    return lo


def rzf_precode(h, d, regions, noise_sigma, k2_grid=None):
    """Regularized ZF with per-data-vector (k1, k2) power optimization.

    For each k2 on the grid the direction u = H^H (H H^H + k2 I)^{-1} d is
    fixed and the cheapest feasible scaling k1 follows in closed form from
    the polytope margins along v = H u; k2 = 0 recovers plain ZF with
    k1 = 1, so the optimum never exceeds the ZF power.
    """
    h = np.asarray(h)
    d = np.asarray(d)
    n_users = h.shape[0]
    if k2_grid is None:
        k2_grid = default_k2_grid(n_users, d, noise_sigma)
    gram = h @ h.conj().T
    eye = np.eye(n_users)
    best = None
    for k2 in k2_grid:
        try:
            y = np.linalg.solve(gram + k2 * eye, d)
        except np.linalg.LinAlgError:
            if k2 == 0.0:
                raise RankDeficientChannelError("singular Gram matrix") from None
            continue
        u = h.conj().T @ y
        v = h @ u
        k1 = _min_feasible_k1(v, regions)
        if not np.isfinite(k1):
            continue
        power = k1 * k1 * float(np.vdot(u, u).real)
        if best is None or power < best.power:
            best = RzfResult(k1 * u, float(k1), float(k2), power, True)
    if best is None:
        return RzfResult(np.zeros(h.shape[1], dtype=complex), np.nan, np.nan,
                         np.inf, False)
    return best


# ---------------------------------------------------------------------------
# Tomlinson-Harashima precoding on replica constellations

def complex_modulo(u, basis, return_offsets=False):
    """Fold u into the half-open square [-basis/2, basis/2)^2 per axis."""
    u = np.asarray(u, dtype=complex)
    a = np.floor((u.real + basis / 2.0) / basis)
    b = np.floor((u.imag + basis / 2.0) / basis)
    folded = u - basis * (a + 1j * b)
    if return_offsets:
        return folded, (a.astype(np.int64), b.astype(np.int64))
    return folded


def vblast_ordering(h):
    """Encode order: greedy smallest orthogonal-complement residual first.

    Ties break toward the lower user index. Raises on rank deficiency.
    """
    h = np.asarray(h, dtype=complex)
    k = h.shape[0]
    residual = h.copy()
    remaining = list(range(k))
    order = []
    for _ in range(k):
        norms = [float(np.vdot(residual[u], residual[u]).real) for u in remaining]
        pick_pos = int(np.argmin(norms))
        pick = remaining.pop(pick_pos)
        order.append(pick)
        norm = np.sqrt(norms[pick_pos])
        if norm <= 1e-12 * max(1.0, float(np.linalg.norm(h))):
            raise RankDeficientChannelError("rank-deficient rows in V-BLAST ordering")
        q = residual[pick] / norm
        for u in remaining:
            residual[u] = residual[u] - np.vdot(q, residual[u]) * q
    return np.asarray(order, dtype=np.int64)


@dataclass(frozen=True)
class ThpEncoding:
    """Successive encoding state: ordering, QR factors, folded symbols.

    b_mat is lower triangular with real positive diagonal; x_bar holds the
    folded symbols in encode order, so b_mat[k, k] * x_bar[k] lies in
    [-p/2, p/2) per axis with p the modulo basis 2 sqrt(M) beta.
    replica_points is user-indexed: the lattice-shifted point each user's
    noiseless receive value lands on exactly.
    """

    ordering: np.ndarray
    f_mat: np.ndarray = field(repr=False)
    b_mat: np.ndarray = field(repr=False)
    x_bar: np.ndarray = field(repr=False)
    replica_points: np.ndarray
    modulo_basis: float
    beta: float
    m_order: int


def thp_zf_encode(h, symbols, m_order, beta):
    """V-BLAST ordered successive THP over the replica constellation.

    Noiselessly, user k receives exactly its replica point: the base symbol
    shifted by the modulo lattice offsets committed during encoding.
    """
    h = np.asarray(h, dtype=complex)
    k = h.shape[0]
    perm = vblast_ordering(h)
    hp = h[perm]
    f, r = np.linalg.qr(hp.conj().T)
    diag = np.diagonal(r).copy()
    if np.any(np.abs(diag) <= 1e-12 * max(1.0, float(np.linalg.norm(h)))):
        raise RankDeficientChannelError("zero diagonal in THP triangular factor")
    phase = diag / np.abs(diag)
    f = f * phase[None, :]
    r = phase.conj()[:, None] * r
    b_mat = r.conj().T  # lower triangular, real positive diagonal

    basis = 2.0 * np.sqrt(m_order) * beta
    d_base = symbol_vector(np.asarray(symbols), m_order, beta)
    d_perm = d_base[perm]
    x_bar = np.zeros(k, dtype=complex)
    replica_perm = np.zeros(k, dtype=complex)
    for i in range(k):
        w = d_perm[i] - b_mat[i, :i] @ x_bar[:i]
        folded, (a_re, a_im) = complex_modulo(w, basis, return_offsets=True)
        x_bar[i] = folded / b_mat[i, i].real
        replica_perm[i] = d_perm[i] - basis * (float(a_re) + 1j * float(a_im))
    x = f @ x_bar

    replica_points = np.zeros(k, dtype=complex)
    replica_points[perm] = replica_perm
    encoding = ThpEncoding(perm, f, b_mat, x_bar, replica_points,
                           float(basis), float(beta), int(m_order))
    return x, encoding


def thp_optimized(channel, encoding, delta0, options=None):
    """Re-solve the transmit vector as a QP boxed around the replica points.

    delta0 = 0 degenerates the boxes to the replica points themselves and
    the solution coincides with the ZF-THP output (the least-norm preimage).
    """
    regions = [box_region(encoding.replica_points[k], delta0, user=k)
               for k in range(channel.n_users)]
    system = assemble_qp(channel, regions)
    result = solve(system, options or SolverOptions())
    return complex_unstack(result.x_tilde), result


def select_uniform_beta(calibration_slots, m_order, pe, noise_sigma,
                        beta_grid=None, options=None):
    """Grid-search the common replica scaling minimizing mean optimized-THP
    power over calibration slots of (EffectiveChannel, symbol indices)."""
    if beta_grid is None:
        floor = min_scaling_replica(noise_sigma, pe)
        beta_grid = floor * np.linspace(1.0, 1.6, 16)
    beta_grid = np.asarray(beta_grid, dtype=float)
    mean_powers = np.zeros(beta_grid.size)
    for bi, beta in enumerate(beta_grid):
        delta0 = solve_delta(beta, noise_sigma, np.sqrt(1.0 - pe))
        total = 0.0
        for eff, symbols in calibration_slots:
            _, encoding = thp_zf_encode(eff.matrix, symbols, m_order, beta)
            x, _ = thp_optimized(eff, encoding, delta0, options)
            total += float(np.vdot(x, x).real)
        mean_powers[bi] = total / max(1, len(calibration_slots))
    best = int(np.argmin(mean_powers))
    return float(beta_grid[best]), mean_powers

"""Accelerated dual-decomposition solver for the precoding QP.

The problem min |x|^2 s.t. A x <= c, B x = e has the closed-form inner
minimizer x = -(A^T lam + B^T nu)/2, so the dual ascent only ever touches
the constraint rows, each of which lives on one user's subcarrier support.
Dual updates use Nesterov-style momentum (t-1)/(t+2) with step 1/(2 kappa),
kappa = sqrt(|M|_1 |M|_inf) for M = [A; B][A; B]^T restricted to active
rows. Message and arithmetic counters account for the bipartite
subcarrier/user schedule: per iteration each active constraint row collects
its user's L subcarrier pairs and each subcarrier pair collects every
active row of the users occupying it, which is what makes sparse signatures
cheap.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SolverOptions:
    rel_tolerance: float = 1e-4
    max_iterations: int = 5000
    initial_lambda: float = 1.0
    feasibility_tol: float = 1e-4
    repair_blocks: int = 3
    repair_block_iters: int = 500


@dataclass
class SolveResult:
    x_tilde: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    iterations: int
    converged: bool
    dual_trace: np.ndarray
    primal_feasibility: float
    message_count: int
    addition_count: int
    multiplication_count: int

    @property
    def power(self):
        return float(self.x_tilde @ self.x_tilde)


def compute_kappa(a_active, b_active):
    """sqrt(|M|_1 |M|_inf) for M = [A; B][A; B]^T over the active rows."""
    rows = [m for m in (a_active, b_active) if m is not None and m.shape[0]]
    if not rows:
        raise ValueError("empty active constraint set")
    stacked = np.vstack(rows)
    gram = stacked @ stacked.T
    abs_gram = np.abs(gram)
    kappa = float(np.sqrt(abs_gram.sum(axis=0).max() * abs_gram.sum(axis=1).max()))
    if kappa == 0.0:
        raise ValueError("active constraint rows are numerically zero")
    return kappa


def primal_from_dual(lam, nu, a_mat, b_mat):
    """Inner minimizer of the Lagrangian: x = -(A^T lam + B^T nu) / 2."""
    return -0.5 * (a_mat.T @ lam + b_mat.T @ nu)


def dual_objective(x, lam, nu, a_mat, c_vec, b_mat, e_vec):
    """g(lam, nu) evaluated through the inner minimizer x."""
    return float(x @ x + lam @ (a_mat @ x - c_vec) + nu @ (b_mat @ x - e_vec))


def dual_update(lam, lam_prev, nu, nu_prev, x_hat, a_mat, c_vec, b_mat, e_vec,
                kappa, t):
    """One accelerated ascent step; lam is projected onto the orthant.

    x_hat is the extrapolated primal point; momentum weight (t-1)/(t+2)
    vanishes at t = 1 so the first step is plain projected gradient.
    """
    w = (t - 1.0) / (t + 2.0)
    step = 1.0 / (2.0 * kappa)
    lam_next = lam + w * (lam - lam_prev) + step * (a_mat @ x_hat - c_vec)
    np.maximum(lam_next, 0.0, out=lam_next)
    nu_next = nu + w * (nu - nu_prev) + step * (b_mat @ x_hat - e_vec)
    return lam_next, nu_next


def _active_row_masks(system):
    a_active = np.array([origin is not None for origin in system.a_rows], dtype=bool)
    b_active = np.array([origin is not None for origin in system.b_rows], dtype=bool)
    return a_active, b_active


def _per_iteration_counts(system, a_active, b_active):
    """(messages, adds, mults) for the primal and dual half-iterations."""
    n_users = system.n_users
    active_rows = np.zeros(n_users, dtype=np.int64)
    for origin, active in zip(system.a_rows, a_active):
        if active:
            active_rows[origin.user] += 1
    for origin, active in zip(system.b_rows, b_active):
        if active:
            active_rows[origin.user] += 1
    degrees = np.array([len(s) for s in system.user_subcarriers], dtype=np.int64)

    psn_msgs = int((degrees * active_rows).sum())
    osn_msgs = int((2 * degrees[active_rows > 0]).sum())

    n_sub = system.n_real_vars // 2
    sub_deg = np.zeros(n_sub, dtype=np.int64)
    for k in range(n_users):
        if active_rows[k]:
            sub_deg[system.user_subcarriers[k]] += active_rows[k]
    occupied = sub_deg[sub_deg > 0]
    psn_adds = int(2 * (occupied - 1).sum())
    psn_mults = int(2 * occupied.sum())

    per_row_adds = 6 * degrees + 5
    per_row_mults = 4 * degrees + 2
    osn_adds = int((active_rows * per_row_adds).sum())
    osn_mults = int((active_rows * per_row_mults).sum())
    return (psn_msgs, psn_adds, psn_mults), (osn_msgs, osn_adds, osn_mults)


def _feasibility(x, system):
    viol = 0.0
    if system.a_mat.shape[0]:
        viol = max(viol, float(np.max(system.a_mat @ x - system.c_vec, initial=0.0)))
    if system.b_mat.shape[0]:
        viol = max(viol, float(np.max(np.abs(system.b_mat @ x - system.e_vec),
                                      initial=0.0)))
    return viol


def solve(system, options=None):
    """Minimize |x|^2 over the constraint polytope by accelerated dual ascent.

    Stops once the normalized dual improvement |g_t - g*| / |g*| drops to
    rel_tolerance, where g* is the best dual value over iterations before t
    (absolute test if |g*| < 1e-9). If the primal point then violates the
    constraints by more than feasibility_tol * max(1, |c|_inf), up to
    repair_blocks extra fixed-length blocks are run before flagging
    non-convergence. The returned x is the final inner minimizer
    -(A^T lam + B^T nu)/2 of the last duals, bit for bit.
    """
    opts = options or SolverOptions()
    a_mat, c_vec = system.a_mat, system.c_vec
    b_mat, e_vec = system.b_mat, system.e_vec
    n_cols = system.n_real_vars

    a_active, b_active = _active_row_masks(system)
    if not a_active.any() and not b_active.any():
        x = np.zeros(n_cols)
        return SolveResult(x, np.zeros(a_mat.shape[0]), np.zeros(b_mat.shape[0]),
                           0, True, np.empty(0), 0.0, 0, 0, 0)

    kappa = compute_kappa(a_mat[a_active], b_mat[b_active])
    (psn_msgs, psn_adds, psn_mults), (osn_msgs, osn_adds, osn_mults) = \
        _per_iteration_counts(system, a_active, b_active)

    lam = np.where(a_active, opts.initial_lambda, 0.0)
    nu = np.zeros(b_mat.shape[0])
    lam_prev = lam.copy()
    nu_prev = nu.copy()
    x_prev = None
    trace = []
    messages = adds = mults = 0
    g_best = -np.inf
    t = 0
    converged = False

    def run_block(limit, check_stop):
        nonlocal lam, nu, lam_prev, nu_prev, x_prev, t, converged
        nonlocal messages, adds, mults, g_best
        steps = 0
        while steps < limit:
            t += 1
            steps += 1
            x = primal_from_dual(lam, nu, a_mat, b_mat)
            messages += psn_msgs
            adds += psn_adds
            mults += psn_mults
            g = dual_objective(x, lam, nu, a_mat, c_vec, b_mat, e_vec)
            trace.append(g)
            if check_stop and t >= 2:
                gap = abs(g - g_best)
                if (gap <= opts.rel_tolerance * abs(g_best)
                        if abs(g_best) >= 1e-9 else gap <= opts.rel_tolerance):
                    converged = True
                    return
            g_best = max(g_best, g)
            w = (t - 1.0) / (t + 2.0)
            x_hat = x if x_prev is None else x + w * (x - x_prev)
            lam_next, nu_next = dual_update(lam, lam_prev, nu, nu_prev, x_hat,
                                            a_mat, c_vec, b_mat, e_vec, kappa, t)
            lam_prev, lam = lam, lam_next
            nu_prev, nu = nu, nu_next
            messages += osn_msgs
            adds += osn_adds
            mults += osn_mults
            x_prev = x

    run_block(opts.max_iterations, check_stop=True)
    x_star = primal_from_dual(lam, nu, a_mat, b_mat)
    feas_scale = max(1.0, float(np.max(np.abs(c_vec), initial=0.0)))
    viol = _feasibility(x_star, system)
    blocks = 0
    while viol > opts.feasibility_tol * feas_scale and blocks < opts.repair_blocks:
        run_block(opts.repair_block_iters, check_stop=False)
        x_star = primal_from_dual(lam, nu, a_mat, b_mat)
        viol = _feasibility(x_star, system)
        blocks += 1
    if viol > opts.feasibility_tol * feas_scale:
        converged = False

    return SolveResult(
        x_tilde=x_star,
        lam=lam,
        nu=nu,
        iterations=len(trace),
        converged=converged,
        dual_trace=np.asarray(trace),
        primal_feasibility=viol,
        message_count=messages,
        addition_count=adds,
        multiplication_count=mults,
    )

"""Independent reference solver for min |x|^2 s.t. A x <= c, B x = e."""

import cvxpy as cp
import numpy as np


def reference_min_power(a_mat, c_vec, b_mat=None, e_vec=None):
    """Interior-point solution via cvxpy/CLARABEL; returns (x, power)."""
    n = a_mat.shape[1]
    x = cp.Variable(n)
    constraints = [a_mat @ x <= c_vec]
    if b_mat is not None and b_mat.size:
        constraints.append(b_mat @ x == e_vec)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(x)), constraints)
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"reference solve ended with status {problem.status}")
    return np.asarray(x.value), float(problem.value)


def reference_system_power(system):
    """Reference power for an assembled constraint system."""
    return reference_min_power(system.a_mat, system.c_vec,
                               system.b_mat, system.e_vec)

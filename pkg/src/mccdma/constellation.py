"""Constellation geometry and per-user SEP constraint polytopes.

The per-user symbol error probability factors into a product of two Gaussian
orthant/interval masses, one per signal axis. Requiring each factor to be at
least sqrt(1-Pe) (and the width-delta variants below) carves a convex
polytope out of the exact feasible region, so the power-minimizing precoder
becomes a linearly constrained least-squares problem. This module owns the
Q-function helpers, the minimum constellation scalings, the interval-width
root solves, the canonical 4/16-QAM coordinate tables, the per-symbol
polytopes, the critical boundary points of the exact region, and the
assembly of the stacked real-valued constraint system.

Canonical 16-QAM layout (index m = 1..16, m-1 = 4*g_re + g_im, axis
amplitude per Gray index g: 0 -> -3b, 1 -> -b, 2 -> +3b, 3 -> +b):

    corner symbols {1, 3, 9, 11}   (both axes at +-3b)
    side symbols   {2, 4, 5, 7, 10, 12, 13, 15}
    center symbols {6, 8, 14, 16}  (both axes at +-b)

so D16 = (+b, +b), D12 = (+3b, +b), D11 = (+3b, +3b), D1 = (-3b, -3b).
4-QAM uses m-1 = 2*b_re + b_im with amplitude 0 -> -b, 1 -> +b, so
D1 = (-b, -b) and D4 = (+b, +b). Per-axis bit labels are Gray codes:
adjacent amplitudes differ in exactly one bit.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special


# ---------------------------------------------------------------------------
# Gaussian tail helpers

def q_function(x):
    """Upper tail of the standard normal, Q(x) = P(Z > x)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def q_inverse(p):
    """Inverse of q_function on (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("q_inverse requires 0 < p < 1")
    return -special.ndtri(p)


def gaussian_interval_mass(lo, hi, sigma):
    """P(lo < Z < hi) for Z ~ N(0, sigma^2); lo/hi may be +-inf."""
    return float(q_function(lo / sigma) - q_function(hi / sigma))


# ---------------------------------------------------------------------------
# Minimum scalings and interval-width roots

def min_scaling_4qam(sigma, pe):
    """Smallest 4-QAM scaling for which the zero-forced point meets Pe."""
    return float(-sigma * q_inverse(np.sqrt(1.0 - pe)))


def min_scaling_16qam(sigma, pe):
    """Smallest 16-QAM scaling: the inner points bind, with closed decision
    squares of half-width beta per axis."""
    return float(sigma * q_inverse(0.5 - 0.5 * np.sqrt(1.0 - pe)))


def min_scaling_replica(sigma, pe):
    """Replica (periodically extended) constellations share the 16-QAM
    inner-point geometry: every decision cell is a closed square."""
    return min_scaling_16qam(sigma, pe)


def centered_interval_mass(half_width, sigma):
    """P(|Z| < w) for Z ~ N(0, sigma^2); this is the alpha of the inner-point
    analysis, equal to 1 - 2 Q(w / sigma)."""
    return float(1.0 - 2.0 * q_function(half_width / sigma))


def _offset_square_mass(delta, beta, sigma):
    # P(Z in [delta - beta, delta + beta]) for Z ~ N(0, sigma^2): even in
    # delta, maximized at delta = 0, strictly decreasing for delta > 0.
    return float(q_function((delta - beta) / sigma) - q_function((delta + beta) / sigma))


class DeltaBracketError(ValueError):
    """Raised when no delta in [0, beta + 10 sigma] attains the target mass."""


def solve_delta(beta, sigma, target):
    """Solve Q((d-b)/s) - Q((d+b)/s) = target for d >= 0 by bisection.

    The left side is the mass of a width-2*beta window offset by d, strictly
    decreasing on d > 0 from its peak 1 - 2Q(beta/sigma); the bracket is
    [0, beta + 10 sigma]. Exact-peak targets return 0.0.
    """
    if not (0.0 < target < 1.0):
        raise DeltaBracketError(f"target mass {target} outside (0, 1)")
    lo, hi = 0.0, beta + 10.0 * sigma
    f_lo = _offset_square_mass(lo, beta, sigma) - target
    if f_lo <= 0.0:
        if f_lo > -1e-12:
            return 0.0
        raise DeltaBracketError(
            f"target mass {target} exceeds the peak {target + f_lo} at delta=0")
    if _offset_square_mass(hi, beta, sigma) - target >= 0.0:
        raise DeltaBracketError(
            f"target mass {target} not bracketed below delta={hi}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _offset_square_mass(mid, beta, sigma) - target > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Coordinate tables

# Gray index -> amplitude multiple of beta, one axis.
_PAM2_AMPLITUDE = np.array([-1.0, 1.0])
_PAM4_AMPLITUDE = np.array([-3.0, -1.0, 3.0, 1.0])

CORNER_16QAM = frozenset({1, 3, 9, 11})
SIDE_16QAM = frozenset({2, 4, 5, 7, 10, 12, 13, 15})
CENTER_16QAM = frozenset({6, 8, 14, 16})


def _axis_levels(index, order):
    # 1-based symbol index -> (real, imag) amplitude multiples of beta
    m = int(index) - 1
    if order == 4:
        if not 0 <= m < 4:
            raise ValueError(f"4-QAM index {index} outside 1..4")
        return float(_PAM2_AMPLITUDE[m >> 1]), float(_PAM2_AMPLITUDE[m & 1])
    if order == 16:
        if not 0 <= m < 16:
            raise ValueError(f"16-QAM index {index} outside 1..16")
        return float(_PAM4_AMPLITUDE[m >> 2]), float(_PAM4_AMPLITUDE[m & 3])
    raise ValueError(f"unsupported constellation order {order}")


def symbol_coordinates(index, order, beta=1.0):
    """Complex coordinates of symbol D_index (1-based) under scaling beta."""
    lr, li = _axis_levels(index, order)
    return beta * (lr + 1j * li)


def symbol_vector(indices, order, beta=1.0):
    """Vectorized symbol_coordinates for an int array of 1-based indices."""
    indices = np.asarray(indices)
    m = indices - 1
    if order == 4:
        re = _PAM2_AMPLITUDE[m >> 1]
        im = _PAM2_AMPLITUDE[m & 1]
    else:
        re = _PAM4_AMPLITUDE[m >> 2]
        im = _PAM4_AMPLITUDE[m & 3]
    return beta * (re + 1j * im)


def symbol_class(index, order):
    """'corner' | 'side' | 'center' for 16-QAM; 4-QAM symbols are 'corner'."""
    if order == 4:
        _axis_levels(index, 4)
        return "corner"
    lr, li = _axis_levels(index, 16)
    outer = (abs(lr) == 3.0, abs(li) == 3.0)
    if all(outer):
        return "corner"
    if any(outer):
        return "side"
    return "center"


def bits_for_symbol(index, order):
    """Per-axis Gray-coded bit label of D_index, most significant bit first."""
    m = int(index) - 1
    n_bits = 2 if order == 4 else 4
    if not 0 <= m < order:
        raise ValueError(f"index {index} outside 1..{order}")
    return np.array([(m >> (n_bits - 1 - b)) & 1 for b in range(n_bits)], dtype=np.int64)


# ---------------------------------------------------------------------------
# Constellation spec and exact decision/region math

@dataclass(frozen=True)
class ConstellationSpec:
    """Modulation order, scaling, SEP target, and noise level for one user.

    Standard 16-QAM pins beta to the minimum scaling (the polytope of a
    center symbol degenerates to a point there, which is the operating
    choice); replica mode allows any beta at or above the same minimum so
    the constraint boxes have nonnegative width.
    """

    order: int
    beta: float
    sep_target: float
    noise_sigma: float
    replica: bool = False

    def __post_init__(self):
        if self.order not in (4, 16):
            raise ValueError(f"unsupported order {self.order}")
        if not (0.0 < self.sep_target < 1.0):
            raise ValueError("sep_target must lie in (0, 1)")
        if self.noise_sigma <= 0.0:
            raise ValueError("noise_sigma must be positive")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.replica:
            floor = min_scaling_replica(self.noise_sigma, self.sep_target)
            if self.beta < floor * (1.0 - 1e-9):
                raise ValueError(
                    f"replica beta {self.beta} below the minimum {floor}")
        elif self.order == 16:
            pinned = min_scaling_16qam(self.noise_sigma, self.sep_target)
            if abs(self.beta - pinned) > 1e-9 * pinned:
                raise ValueError(
                    f"standard 16-QAM requires beta = {pinned}, got {self.beta}")

    @property
    def margin(self):
        """I = -sigma Q^{-1}(sqrt(1-Pe)), the per-axis half-plane margin."""
        return float(-self.noise_sigma * q_inverse(np.sqrt(1.0 - self.sep_target)))


def decision_intervals(symbol, spec):
    """Per-axis decision interval (lo, hi) of the detector for this symbol.

    Replica cells are the squares of half-width beta around the point
    (lattice wraparound ignored, which is the conservative reading); symbol
    may be a complex center in replica mode.
    """
    beta = spec.beta
    if spec.replica:
        c = complex(symbol) if not isinstance(symbol, (int, np.integer)) \
            else symbol_coordinates(symbol, spec.order, beta)
        return ((c.real - beta, c.real + beta), (c.imag - beta, c.imag + beta))
    lr, li = _axis_levels(symbol, spec.order)
    out = []
    for level in (lr, li):
        c = level * beta
        if spec.order == 4:
            out.append((0.0, np.inf) if level > 0 else (-np.inf, 0.0))
        elif abs(level) == 3.0:
            out.append((c - beta, np.inf) if level > 0 else (-np.inf, c + beta))
        else:
            out.append((c - beta, c + beta))
    return tuple(out)


def success_product(y, symbol, spec):
    """Exact per-symbol success probability O^(r) * O^(i) at noiseless y.

    y may be complex or an (y_re, y_im) pair; the pair form admits the
    infinite coordinates that boundary_points produces.
    """
    (r_lo, r_hi), (i_lo, i_hi) = decision_intervals(symbol, spec)
    y = complex(y[0], y[1]) if isinstance(y, tuple) else complex(y)
    s = spec.noise_sigma
    o_r = gaussian_interval_mass(_shift(r_lo, y.real), _shift(r_hi, y.real), s)
    o_i = gaussian_interval_mass(_shift(i_lo, y.imag), _shift(i_hi, y.imag), s)
    return o_r * o_i


def _shift(bound, value):
    """bound - value with the same-signed-infinity limit taken as bound."""
    if math.isinf(bound) and math.isinf(value) and (bound > 0) == (value > 0):
        return bound
    return bound - value


# ---------------------------------------------------------------------------
# Constraint polytopes

class HalfPlane(NamedTuple):
    """coef_re * y_re + coef_im * y_im <= bound (axis-aligned here)."""

    coef_re: float
    coef_im: float
    bound: float


class AxisEquality(NamedTuple):
    """y on the given axis (0 = real, 1 = imag) equals value."""

    axis: int
    value: float


@dataclass(frozen=True)
class ConstraintRegion:
    """Convex per-user polytope on the noiseless receive point.

    two_rows_per_axis selects the wide stacked layout (two inequality slots
    per axis plus equality slots), which every 16-QAM or replica region
    uses; plain 4-QAM quadrant regions pack one row per axis.
    """

    user: int
    halfplanes: tuple
    equalities: tuple
    two_rows_per_axis: bool


def _box_halfplanes(center, half_width):
    c = complex(center)
    w = float(half_width)
    return (
        HalfPlane(1.0, 0.0, c.real + w),
        HalfPlane(-1.0, 0.0, -(c.real - w)),
        HalfPlane(0.0, 1.0, c.imag + w),
        HalfPlane(0.0, -1.0, -(c.imag - w)),
    )


def box_region(center, half_width, user=0):
    """Replica-style box |y_axis - center_axis| <= half_width as four rows.

    Zero width degenerates the box to the point itself; that case is
    emitted as two axis equalities (an equivalent but numerically exact
    form; opposing inequality pairs would leave the dual unbounded).
    """
    if half_width < 0:
        raise ValueError("half_width must be nonnegative")
    if half_width == 0:
        c = complex(center)
        eqs = (AxisEquality(0, c.real), AxisEquality(1, c.imag))
        return ConstraintRegion(user, (), eqs, True)
    return ConstraintRegion(user, _box_halfplanes(center, half_width), (), True)


def constraint_region(symbol, spec, user=0):
    """Conservative polytope C(d) for the given symbol under spec.

    4-QAM: the quadrant pushed in by margin I on both axes. 16-QAM at the
    pinned scaling: corner symbols get one half-plane per outer axis at
    2*beta + I, side symbols one half-plane plus a zero-forcing equality on
    the inner axis, center symbols two equalities. Replica mode: the box of
    half-width delta0 around the (replica) point, where delta0 makes each
    axis mass sqrt(1-Pe); symbol may then be a complex point.
    """
    if spec.replica:
        delta0 = solve_delta(spec.beta, spec.noise_sigma,
                             math.sqrt(1.0 - spec.sep_target))
        if isinstance(symbol, (int, np.integer)):
            center = symbol_coordinates(symbol, spec.order, spec.beta)
        else:
            center = complex(symbol)
        return box_region(center, delta0, user)

    margin = spec.margin
    lr, li = _axis_levels(symbol, spec.order)
    if spec.order == 4:
        planes = (
            HalfPlane(-math.copysign(1.0, lr), 0.0, -margin),
            HalfPlane(0.0, -math.copysign(1.0, li), -margin),
        )
        return ConstraintRegion(user, planes, (), False)

    planes = []
    equalities = []
    for axis, level in enumerate((lr, li)):
        if abs(level) == 3.0:
            s = math.copysign(1.0, level)
            coef = (-s, 0.0) if axis == 0 else (0.0, -s)
            planes.append(HalfPlane(coef[0], coef[1], -(2.0 * spec.beta + margin)))
        else:
            equalities.append(AxisEquality(axis, level * spec.beta))
    return ConstraintRegion(user, tuple(planes), tuple(equalities), True)


def boundary_points(symbol, spec):
    """Critical points on the boundary of the exact region B(d).

    Every returned (y_re, y_im) pair (possibly with an infinite coordinate)
    satisfies O^(r) * O^(i) = 1 - Pe. 4-QAM and 16-QAM corner symbols yield
    three points; side symbols five; center symbols eight (width roots
    delta0/delta1/delta2 collapse them onto the symbol at the pinned
    scaling). Replica mode returns the four box corners.
    """
    pe = spec.sep_target
    sigma = spec.noise_sigma
    beta = spec.beta
    sqrt_target = math.sqrt(1.0 - pe)

    if spec.replica:
        delta0 = solve_delta(beta, sigma, sqrt_target)
        if isinstance(symbol, (int, np.integer)):
            c = symbol_coordinates(symbol, spec.order, beta)
        else:
            c = complex(symbol)
        return [(c.real + sr * delta0, c.imag + si * delta0)
                for sr in (+1.0, -1.0) for si in (+1.0, -1.0)]

    m1 = float(-sigma * q_inverse(1.0 - pe))
    m2 = float(-sigma * q_inverse(sqrt_target))
    lr, li = _axis_levels(symbol, spec.order)

    if spec.order == 4:
        sr, si = math.copysign(1.0, lr), math.copysign(1.0, li)
        return [
            (sr * np.inf, si * m1),
            (sr * m1, si * np.inf),
            (sr * m2, si * m2),
        ]

    alpha = centered_interval_mass(beta, sigma)
    klass = symbol_class(symbol, 16)
    if klass == "corner":
        sr, si = math.copysign(1.0, lr), math.copysign(1.0, li)
        edge1 = 2.0 * beta + m1
        edge2 = 2.0 * beta + m2
        return [
            (sr * edge1, si * np.inf),
            (sr * np.inf, si * edge1),
            (sr * edge2, si * edge2),
        ]
    if klass == "center":
        cr, ci = lr * beta, li * beta
        delta0 = solve_delta(beta, sigma, sqrt_target)
        delta1 = solve_delta(beta, sigma, (1.0 - pe) / alpha)
        pts = [(cr + s * delta1, ci) for s in (+1.0, -1.0)]
        pts += [(cr, ci + s * delta1) for s in (+1.0, -1.0)]
        pts += [(cr + sr * delta0, ci + si * delta0)
                for sr in (+1.0, -1.0) for si in (+1.0, -1.0)]
        return pts

    # side symbol: one outer axis, one inner axis
    delta0 = solve_delta(beta, sigma, sqrt_target)
    delta2 = solve_delta(beta, sigma, 1.0 - pe)
    outer_axis = 0 if abs(lr) == 3.0 else 1
    s_out = math.copysign(1.0, (lr, li)[outer_axis])
    c_in = (lr, li)[1 - outer_axis] * beta
    edge_a = 2.0 * beta - sigma * float(q_inverse((1.0 - pe) / alpha))
    edge_b = 2.0 * beta + m2

    def _pt(outer_val, inner_val):
        return (outer_val, inner_val) if outer_axis == 0 else (inner_val, outer_val)

    pts = [_pt(s_out * edge_a, c_in)]
    pts += [_pt(s_out * edge_b, c_in + s * delta0) for s in (+1.0, -1.0)]
    pts += [_pt(s_out * np.inf, c_in + s * delta2) for s in (+1.0, -1.0)]
    return pts


# ---------------------------------------------------------------------------
# Stacked real-valued constraint system

class RowOrigin(NamedTuple):
    user: int
    axis: int        # 0 = real, 1 = imag
    kind: str        # 'upper' | 'lower' | 'one_sided' | 'equality'


@dataclass(frozen=True)
class ConstraintSystem:
    """A x~ <= c, B x~ = e over the stacked real transmit vector.

    Row slots follow the per-user block layout (two or four inequality slots
    plus, in the wide layout, two equality slots per user); unused slots are
    zero rows with zero bounds. a_rows / b_rows hold a RowOrigin per slot or
    None for padding; user_subcarriers records each user's allocation for
    the message/flop accounting of the solver.
    """

    a_mat: np.ndarray = field(repr=False)
    c_vec: np.ndarray = field(repr=False)
    b_mat: np.ndarray = field(repr=False)
    e_vec: np.ndarray = field(repr=False)
    a_rows: tuple
    b_rows: tuple
    user_subcarriers: tuple

    @property
    def n_users(self):
        return len(self.user_subcarriers)

    @property
    def n_real_vars(self):
        return self.a_mat.shape[1]


def real_stack(x):
    """Complex length-N vector -> interleaved [Re x1, Im x1, ...] in R^2N."""
    x = np.asarray(x)
    out = np.empty(2 * x.size)
    out[0::2] = x.real
    out[1::2] = x.imag
    return out


def complex_unstack(x_tilde):
    """Inverse of real_stack."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    return x_tilde[0::2] + 1j * x_tilde[1::2]


def _constraint_row(coef_re, coef_im, h_row, subcarriers, n_cols):
    # y_re coefficients: (Re h) on x_re and (-Im h) on x_im;
    # y_im coefficients: (Im h) on x_re and (Re h) on x_im.
    row = np.zeros(n_cols)
    for n in subcarriers:
        h = h_row[n]
        row[2 * n] = coef_re * h.real + coef_im * h.imag
        row[2 * n + 1] = -coef_re * h.imag + coef_im * h.real
    return row


def assemble_qp(channel, regions):
    """Stack per-user polytopes into the real-valued constraint system.

    Wide layout (any region with two_rows_per_axis): four inequality slots
    per user (real-axis rows first) and two equality slots per user. Plain
    4-QAM layout: two inequality slots per user, no equality block. Slots a
    region does not use stay zero-padded, preserving the fixed indexing.
    """
    h = channel.matrix
    n_users, n_sub = h.shape
    if len(regions) != n_users:
        raise ValueError(f"expected {n_users} regions, got {len(regions)}")
    for k, region in enumerate(regions):
        if region.user != k:
            raise ValueError(f"region {k} labeled for user {region.user}")

    wide = any(r.two_rows_per_axis for r in regions)
    ineq_per_user = 4 if wide else 2
    n_cols = 2 * n_sub
    n_ineq = ineq_per_user * n_users
    n_eq = 2 * n_users if wide else 0

    a_mat = np.zeros((n_ineq, n_cols))
    c_vec = np.zeros(n_ineq)
    b_mat = np.zeros((n_eq, n_cols))
    e_vec = np.zeros(n_eq)
    a_rows = [None] * n_ineq
    b_rows = [None] * n_eq
    subcarriers = tuple(np.flatnonzero(h[k]) for k in range(n_users))

    for k, region in enumerate(regions):
        used = {0: 0, 1: 0}
        for plane in region.halfplanes:
            if plane.coef_re != 0.0 and plane.coef_im != 0.0:
                raise ValueError("only axis-aligned half-planes are supported")
            axis = 0 if plane.coef_re != 0.0 else 1
            slot_in_axis = used[axis]
            per_axis = ineq_per_user // 2
            if slot_in_axis >= per_axis:
                raise ValueError(f"too many half-planes on axis {axis} for user {k}")
            i = ineq_per_user * k + (per_axis * axis) + slot_in_axis
            used[axis] += 1
            a_mat[i] = _constraint_row(plane.coef_re, plane.coef_im, h[k],
                                       subcarriers[k], n_cols)
            c_vec[i] = plane.bound
            # a pair on one axis is upper (slot 0) then lower (slot 1)
            pair = sum(1 for p in region.halfplanes
                       if (0 if p.coef_re != 0.0 else 1) == axis) == 2
            kind = ("upper" if slot_in_axis == 0 else "lower") if pair else "one_sided"
            a_rows[i] = RowOrigin(k, axis, kind)
        if region.equalities and not wide:
            raise ValueError("equalities require the wide layout")
        for eq in region.equalities:
            j = 2 * k + eq.axis
            if b_rows[j] is not None:
                raise ValueError(f"duplicate equality on axis {eq.axis} for user {k}")
            coef = (1.0, 0.0) if eq.axis == 0 else (0.0, 1.0)
            b_mat[j] = _constraint_row(coef[0], coef[1], h[k],
                                       subcarriers[k], n_cols)
            e_vec[j] = eq.value
            b_rows[j] = RowOrigin(k, eq.axis, "equality")

    for arr in (a_mat, c_vec, b_mat, e_vec):
        arr.setflags(write=False)
    return ConstraintSystem(a_mat, c_vec, b_mat, e_vec, tuple(a_rows),
                            tuple(b_rows), subcarriers)


def export_triplets(system, path):
    """Write the constraint system in sparse triplet text form."""
    with open(path, "w") as fh:
        fh.write(f"{system.a_mat.shape[0]} {system.b_mat.shape[0]} "
                 f"{system.n_real_vars}\n")
        for tag, mat, vec in (("A", system.a_mat, system.c_vec),
                              ("B", system.b_mat, system.e_vec)):
            rows, cols = np.nonzero(mat)
            for r, c in zip(rows, cols):
                fh.write(f"{tag} {r} {c} {float(mat[r, c])!r}\n")
            for r, v in enumerate(vec):
                if v != 0.0:
                    fh.write(f"{tag.lower()} {r} {float(v)!r}\n")

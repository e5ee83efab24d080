"""Assembly of the stacked real constraint system A x <= c, B x = e."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mccdma.channel import EffectiveChannel
from mccdma.constellation import (
    ConstellationSpec,
    ConstraintRegion,
    HalfPlane,
    assemble_qp,
    box_region,
    complex_unstack,
    constraint_region,
    export_triplets,
    min_scaling_16qam,
    real_stack,
    solve_delta,
    symbol_vector,
)
from mccdma.channel import generate_channel, effective_channel
from mccdma.precoders import zf_precode
from mccdma.signatures import build_factor_graph, generate_regular_signatures

SIGMA = 1.0 / np.sqrt(2.0)
PE = 1e-3


def _effective(matrix):
    h = np.asarray(matrix, dtype=complex)
    h.setflags(write=False)
    return EffectiveChannel(h, build_factor_graph(h))


# the 2-user, 3-subcarrier reference system: user 1 sends the center point
# (beta, beta) as a width-delta0 box, user 2 the corner (3 beta, 3 beta)
REFERENCE_H = np.array([[1 + 1j, -1 + 1j, 0], [0, 1 + 1j, 1 - 1j]])

REFERENCE_A = np.array([
    [1, -1, -1, -1, 0, 0],
    [-1, 1, 1, 1, 0, 0],
    [1, 1, 1, -1, 0, 0],
    [-1, -1, -1, 1, 0, 0],
    [0, 0, -1, 1, -1, -1],
    [0, 0, 0, 0, 0, 0],
    [0, 0, -1, -1, 1, -1],
    [0, 0, 0, 0, 0, 0],
], dtype=float)


def _reference_c(beta, delta0, margin):
    edge = -(2.0 * beta + margin)
    return np.array([beta + delta0, -(beta - delta0), beta + delta0,
                     -(beta - delta0), edge, 0.0, edge, 0.0])


def _corner_literals(beta, margin, user):
    bound = -(2.0 * beta + margin)
    planes = (HalfPlane(-1.0, 0.0, bound), HalfPlane(0.0, -1.0, bound))
    return ConstraintRegion(user, planes, (), True)


def _center_pair_literals(beta, user):
    # zero-width box written out as opposing inequality pairs
    planes = (
        HalfPlane(1.0, 0.0, beta), HalfPlane(-1.0, 0.0, -beta),
        HalfPlane(0.0, 1.0, beta), HalfPlane(0.0, -1.0, -beta),
    )
    return ConstraintRegion(user, planes, (), True)


class TestReferenceSystem:
    def test_at_general_beta(self):
        beta = 1.2 * min_scaling_16qam(SIGMA, PE)
        delta0 = solve_delta(beta, SIGMA, np.sqrt(1 - PE))
        assert delta0 > 0
        margin = float(-SIGMA * _q_inv(np.sqrt(1 - PE)))
        eff = _effective(REFERENCE_H)
        regions = [
            box_region(complex(beta, beta), delta0, user=0),
            _corner_literals(beta, margin, user=1),
        ]
        system = assemble_qp(eff, regions)
        assert np.array_equal(system.a_mat, REFERENCE_A)
        assert np.allclose(system.c_vec, _reference_c(beta, delta0, margin),
                           atol=1e-12)
        assert system.b_mat.shape == (4, 6)
        assert not system.b_mat.any()
        assert not system.e_vec.any()

    def test_at_minimum_beta(self):
        # delta0 collapses to 0; the printed pair form is constructed from
        # explicit half-plane literals
        spec = ConstellationSpec(16, min_scaling_16qam(SIGMA, PE), PE, SIGMA)
        eff = _effective(REFERENCE_H)
        regions = [
            _center_pair_literals(spec.beta, user=0),
            constraint_region(11, spec, user=1),
        ]
        system = assemble_qp(eff, regions)
        assert np.array_equal(system.a_mat, REFERENCE_A)
        assert np.allclose(
            system.c_vec, _reference_c(spec.beta, 0.0, spec.margin), atol=1e-12)

    def test_row_origins(self):
        beta = 1.2 * min_scaling_16qam(SIGMA, PE)
        delta0 = solve_delta(beta, SIGMA, np.sqrt(1 - PE))
        system = assemble_qp(_effective(REFERENCE_H), [
            box_region(complex(beta, beta), delta0, user=0),
            _corner_literals(beta, 0.3, user=1),
        ])
        kinds = [(o.user, o.axis, o.kind) if o else None for o in system.a_rows]
        assert kinds == [
            (0, 0, "upper"), (0, 0, "lower"), (0, 1, "upper"), (0, 1, "lower"),
            (1, 0, "one_sided"), None, (1, 1, "one_sided"), None,
        ]
        assert all(o is None for o in system.b_rows)


def _q_inv(p):
    from mccdma.constellation import q_inverse
    return q_inverse(p)


def _random_system(seed, order=4, k=6, n=8, l=3):
    rng = np.random.default_rng(seed)
    sig = generate_regular_signatures(k, n, l, rng)
    eff = effective_channel(sig, generate_channel(k, n, seed=rng))
    if order == 4:
        beta = float(-SIGMA * _q_inv(np.sqrt(1 - PE)))
    else:
        beta = min_scaling_16qam(SIGMA, PE)
    spec = ConstellationSpec(order, beta, PE, SIGMA)
    syms = rng.integers(1, order + 1, k)
    regions = [constraint_region(int(syms[u]), spec, user=u) for u in range(k)]
    return eff, spec, syms, assemble_qp(eff, regions)


@pytest.mark.parametrize("order", [4, 16])
def test_zf_point_is_feasible(order):
    for seed in range(5):
        eff, spec, syms, system = _random_system(seed, order)
        d = symbol_vector(syms, order, spec.beta)
        x = real_stack(zf_precode(eff.matrix, d))
        assert np.all(system.a_mat @ x <= system.c_vec + 1e-9)
        assert np.allclose(system.b_mat @ x, system.e_vec, atol=1e-9)


@pytest.mark.parametrize("order,rows_per_user", [(4, 2), (16, 4)])
def test_layout_shapes(order, rows_per_user):
    eff, spec, syms, system = _random_system(0, order)
    k, n = eff.matrix.shape
    assert system.a_mat.shape == (rows_per_user * k, 2 * n)
    if order == 4:
        assert system.b_mat.shape == (0, 2 * n)
    else:
        assert system.b_mat.shape == (2 * k, 2 * n)
    assert len(system.a_rows) == system.a_mat.shape[0]
    assert len(system.b_rows) == system.b_mat.shape[0]
    assert system.n_users == k
    assert system.n_real_vars == 2 * n


def test_padded_rows_are_zero():
    eff, spec, syms, system = _random_system(1, 16)
    for i, origin in enumerate(system.a_rows):
        if origin is None:
            assert not system.a_mat[i].any()
            assert system.c_vec[i] == 0.0
    for j, origin in enumerate(system.b_rows):
        if origin is None:
            assert not system.b_mat[j].any()
            assert system.e_vec[j] == 0.0


def test_rows_vanish_outside_user_support():
    eff, spec, syms, system = _random_system(2, 16)
    for i, origin in enumerate(system.a_rows):
        if origin is None:
            continue
        support = set(2 * n for n in system.user_subcarriers[origin.user])
        support |= set(2 * n + 1 for n in system.user_subcarriers[origin.user])
        outside = [c for c in range(system.n_real_vars) if c not in support]
        assert not system.a_mat[i, outside].any()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([4, 16]))
def test_row_action_matches_plane_evaluation(seed, order):
    # a_mat row dotted with the stacked x equals the half-plane functional
    # applied to the complex receive value H x
    rng = np.random.default_rng(seed)
    eff, spec, syms, system = _random_system(seed, order)
    x = rng.standard_normal(eff.matrix.shape[1]) \
        + 1j * rng.standard_normal(eff.matrix.shape[1])
    y = eff.matrix @ x
    xt = real_stack(x)
    ax = system.a_mat @ xt
    regions = [constraint_region(int(syms[u]), spec, user=u)
               for u in range(eff.matrix.shape[0])]
    seen = set()
    for i, origin in enumerate(system.a_rows):
        if origin is None:
            assert ax[i] == 0.0
            continue
        planes = [p for p in regions[origin.user].halfplanes
                  if (0 if p.coef_re != 0.0 else 1) == origin.axis]
        # pair rows keep construction order: upper first, then lower
        plane = planes[0 if origin.kind in ("upper", "one_sided") else 1]
        want = plane.coef_re * y[origin.user].real \
            + plane.coef_im * y[origin.user].imag
        assert abs(ax[i] - want) < 1e-9 * max(1.0, abs(want))
        seen.add((origin.user, origin.axis, origin.kind))
    bx = system.b_mat @ xt
    for j, origin in enumerate(system.b_rows):
        if origin is None:
            assert bx[j] == 0.0
            continue
        eq = [q for q in regions[origin.user].equalities
              if q.axis == origin.axis][0]
        want = y[origin.user].real if eq.axis == 0 else y[origin.user].imag
        assert abs(bx[j] - want) < 1e-9 * max(1.0, abs(want))


def test_user_region_mismatch_rejected():
    eff, spec, syms, _ = _random_system(3, 4)
    regions = [constraint_region(1, spec, user=0)] * eff.matrix.shape[0]
    with pytest.raises(ValueError):
        assemble_qp(eff, regions)


def test_equality_requires_wide_layout():
    # a narrow (4-QAM) assembly cannot host equality rows
    eff, spec, syms, _ = _random_system(4, 4)
    k = eff.matrix.shape[0]
    from mccdma.constellation import AxisEquality
    regions = [ConstraintRegion(u, (), (AxisEquality(0, 1.0),
                                        AxisEquality(1, 1.0)), False)
               for u in range(k)]
    with pytest.raises(ValueError):
        assemble_qp(eff, regions)


def test_triplet_export_reconstructs(tmp_path):
    eff, spec, syms, system = _random_system(5, 16)
    path = tmp_path / "system.txt"
    export_triplets(system, path)
    with open(path) as fh:
        n_a, n_b, n_vars = (int(v) for v in fh.readline().split())
        a = np.zeros((n_a, n_vars))
        b = np.zeros((n_b, n_vars))
        c = np.zeros(n_a)
        e = np.zeros(n_b)
        for line in fh:
            parts = line.split()
            if parts[0] == "A":
                a[int(parts[1]), int(parts[2])] = float(parts[3])
            elif parts[0] == "B":
                b[int(parts[1]), int(parts[2])] = float(parts[3])
            elif parts[0] == "a":
                c[int(parts[1])] = float(parts[2])
            else:
                e[int(parts[1])] = float(parts[2])
    assert np.array_equal(a, system.a_mat)
    assert np.array_equal(b, system.b_mat)
    assert np.array_equal(c, system.c_vec)
    assert np.array_equal(e, system.e_vec)


def test_real_stack_roundtrip():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(7) + 1j * rng.standard_normal(7)
    assert np.array_equal(complex_unstack(real_stack(x)), x)
    xt = real_stack(x)
    assert xt[0] == x[0].real and xt[1] == x[0].imag
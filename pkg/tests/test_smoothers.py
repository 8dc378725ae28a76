import numpy as np
import pytest

from crbiot.fespace import (
    Field,
    SpaceKind,
    contp1_to_dgp1,
    cr_to_dgp1,
    face_integral_bubble,
    face_trace_integrals,
    quad_rule,
    tri_integral_bubble,
    tri_points_xy,
    values_on_tris,
    bubble_values,
    zeros,
)
from crbiot.mesh import build_structured
from crbiot.smoothers import (
    _M_LOC,
    averaging_A,
    bubble_load,
    interp_I,
    smooth_E,
    smooth_E_CR,
    smooth_E_dG,
    smooth_F,
    smoother_assembly,
)


def _random_dgp1(mesh, seed=0):
    rng = np.random.default_rng(seed)
    return Field(SpaceKind.DGP1, rng.standard_normal(3 * mesh.n_triangles))


def _random_cr2(mesh, seed=0):
    rng = np.random.default_rng(seed)
    return Field(SpaceKind.CR2, rng.standard_normal(2 * len(mesh.interior_faces)))


def _continuous_dgp1(mesh, seed=0):
    """dGP1 coefficients of a random continuous P1 field with zero boundary."""
    rng = np.random.default_rng(seed)
    n = int((~mesh.is_boundary_vertex).sum())
    return Field(SpaceKind.DGP1, contp1_to_dgp1(mesh, rng.standard_normal(n)))


def test_averaging_fixes_continuous_fields():
    m = build_structured("crisscross", 2)
    s = _continuous_dgp1(m, seed=1)
    a = averaging_A(m, s)
    back = contp1_to_dgp1(m, a.coeffs)
    assert np.allclose(back, s.coeffs, atol=1e-13)


def test_averaging_of_one():
    m = build_structured("right-split", 2)
    ones = Field(SpaceKind.DGP1, np.ones(3 * m.n_triangles))
    a = averaging_A(m, ones)
    assert np.allclose(a.coeffs, 1.0, atol=1e-14)


def test_averaging_indicator_crisscross_center():
    m = build_structured("crisscross", 1)
    ind = zeros(m, SpaceKind.DGP1)
    ind.coeffs[0:3] = 1.0  # indicator of the first triangle
    a = averaging_A(m, ind)
    # the single interior vertex is the cell center, touched by 4 triangles
    assert len(a.coeffs) == 1
    assert abs(a.coeffs[0] - 0.25) < 1e-14


def test_smooth_e_fixes_continuous_fields():
    m = build_structured("crisscross", 2)
    s = _continuous_dgp1(m, seed=2)
    e = smooth_E(m, s)
    rule = quad_rule("triangle", 4)
    got = bubble_values(m, e.coeffs, rule.points)
    want = values_on_tris(m, s, rule.points)
    assert np.max(np.abs(got - want)) < 1e-12
    # bubble coefficients vanish
    assert np.max(np.abs(e.coeffs[m.n_vertices :])) < 1e-12


def test_smooth_e_preserves_face_averages():
    m = build_structured("right-split", 3)
    q = _random_dgp1(m, seed=3)
    e = smooth_E(m, q)
    traces = face_trace_integrals(m, q.coeffs)
    got = face_integral_bubble(m, e.coeffs)
    for f in m.interior_faces:
        avg = 0.5 * (traces[f, 0] + traces[f, 1])
        assert abs(got[f] - avg) < 1e-12


def test_smooth_e_zero():
    m = build_structured("right-split", 2)
    e = smooth_E(m, zeros(m, SpaceKind.DGP1))
    assert not np.any(e.coeffs)


def test_smooth_e_cr_preserves_face_integrals():
    m = build_structured("right-split", 3)
    v = _random_cr2(m, seed=4)
    e = smooth_E_CR(m, v)
    n = len(v.coeffs) // 2
    nb = len(e.coeffs) // 2
    for comp, cr in ((0, v.coeffs[:n]), (1, v.coeffs[n:])):
        traces = face_trace_integrals(m, cr_to_dgp1(m, cr))
        got = face_integral_bubble(m, e.coeffs[comp * nb : (comp + 1) * nb])
        for f in range(m.n_faces):
            want = 0.0 if m.is_boundary_face[f] else traces[f, 0]
            assert abs(got[f] - want) < 1e-12


def test_smooth_e_dg_moment_identities():
    m = build_structured("crisscross", 2)
    q = _random_dgp1(m, seed=5)
    e = smooth_E_dG(m, q)
    # cell means preserved
    cell = tri_integral_bubble(m, e.coeffs)
    want = m.skeleton().area * q.coeffs.reshape(-1, 3).mean(axis=1)
    assert np.max(np.abs(cell - want)) < 1e-12
    # face averages preserved
    traces = face_trace_integrals(m, q.coeffs)
    got = face_integral_bubble(m, e.coeffs)
    for f in m.interior_faces:
        assert abs(got[f] - 0.5 * (traces[f, 0] + traces[f, 1])) < 1e-12


def test_smooth_e_dg_fixed_point():
    m = build_structured("right-split", 2)
    s = _continuous_dgp1(m, seed=6)
    e = smooth_E_dG(m, s)
    rule = quad_rule("triangle", 4)
    got = bubble_values(m, e.coeffs, rule.points)
    want = values_on_tris(m, s, rule.points)
    assert np.max(np.abs(got - want)) < 1e-12


def test_local_moment_matrix_spd():
    m = build_structured("right-split", 1)
    rule = quad_rule("triangle", 6)
    lam = rule.points
    cubic = 60.0 * lam.prod(axis=1)  # S_T relative to |T| = 1 scaling
    got = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            got[i, j] = np.dot(rule.weights, lam[:, i] * lam[:, j] * cubic)
    assert np.allclose(got, _M_LOC, atol=1e-14)
    assert np.all(np.linalg.eigvalsh(_M_LOC) > 0)


def test_smooth_f_first_order_moments():
    m = build_structured("crisscross", 2)
    q = _random_dgp1(m, seed=7)
    fq = smooth_F(m, q)
    rule = quad_rule("triangle", 6)
    lam = rule.points
    area = m.skeleton().area
    fvals = bubble_values(m, fq.coeffs, rule.points)
    qvals = values_on_tris(m, q, rule.points)
    for i in range(3):
        got = area * ((fvals * lam[None, :, i]) @ rule.weights)
        want = area * ((qvals * lam[None, :, i]) @ rule.weights)
        assert np.max(np.abs(got - want)) < 1e-12


def test_smooth_f_fixed_point():
    m = build_structured("right-split", 3)
    s = _continuous_dgp1(m, seed=8)
    fq = smooth_F(m, s)
    rule = quad_rule("triangle", 4)
    got = bubble_values(m, fq.coeffs, rule.points)
    want = values_on_tris(m, s, rule.points)
    assert np.max(np.abs(got - want)) < 1e-12


def test_interp_consistency_on_dgp1():
    m = build_structured("right-split", 3)
    q = _random_dgp1(m, seed=9)
    got = interp_I(m, q)
    want = q.coeffs.reshape(-1, 3).mean(axis=1)
    assert np.max(np.abs(got.coeffs - want)) < 1e-12
    ones = interp_I(m, lambda x, y: np.ones_like(x))
    assert np.allclose(ones.coeffs, 1.0, atol=1e-13)


def test_interp_adjoint_identity():
    m = build_structured("crisscross", 2)
    rng = np.random.default_rng(10)
    coef = rng.standard_normal(10)

    def q(x, y):
        return (
            coef[0] + coef[1] * x + coef[2] * y + coef[3] * x * y
            + coef[4] * x**2 + coef[5] * y**2 + coef[6] * x**3
            + coef[7] * y**3 + coef[8] * x**2 * y + coef[9] * x * y**2
        )

    Q = Field(SpaceKind.P0, rng.standard_normal(m.n_triangles))
    area = m.skeleton().area
    lhs = float(np.dot(area * interp_I(m, q).coeffs, Q.coeffs))
    # rhs by exact quadrature of q * F(Q): F(Q) has degree 4, q degree 3
    emb = Field(SpaceKind.DGP1, np.repeat(Q.coeffs, 3))
    fq = smooth_F(m, emb)
    rule = quad_rule("triangle", 8)
    xy = tri_points_xy(m, rule.points)
    qv = q(xy[..., 0], xy[..., 1])
    fv = bubble_values(m, fq.coeffs, rule.points)
    rhs = float(area @ ((qv * fv) @ rule.weights))
    assert abs(lhs - rhs) < 1e-11 * max(1.0, abs(rhs))


def test_operators_linear_and_local():
    m = build_structured("right-split", 2)
    sm = smoother_assembly(m)
    # sparsity stays patch-local: each column of E touches few rows
    per_col = np.diff(sm.smooth_e.tocsc().indptr)
    assert per_col.max() <= 12

import numpy as np
import pytest
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from crbiot.assembly import (
    DGConfig,
    DGStabilityError,
    MaterialParams,
    assemble_ACR,
    assemble_AdG,
    assemble_B,
    assemble_pair_div,
    assemble_pair_mass,
    assemble_rhs_plain,
    assemble_rhs_smoothed,
    dg_smallest_eigenvalue,
    div_map_cr2,
    forms,
)
from crbiot.fespace import (
    Field,
    SpaceKind,
    contp1_to_dgp1,
    cr_face_dofs,
    cr_to_dgp1,
    dgp1_gradients,
    quad_rule,
    tri_points_xy,
    values_on_tris,
    vector_values_on_tris,
)
from crbiot.mesh import build_structured, refine_uniform

NOCHECK = DGConfig(eta=10.0, check=False)


def test_acr_symmetric():
    m = build_structured("right-split", 2)
    A = assemble_ACR(m)
    diff = np.abs((A - A.T).toarray()).max()
    assert diff <= 1e-13 * np.abs(A.toarray()).max()


def test_acr_positive_on_rigid_rotation():
    m = build_structured("right-split", 3)
    # CR interpolant of (-y, x): midpoint values on interior faces
    mids = 0.5 * (m.vertices[m.faces[:, 0]] + m.vertices[m.faces[:, 1]])
    mids = mids[m.interior_faces]
    v = np.concatenate([-mids[:, 1], mids[:, 0]])
    A = assemble_ACR(m)
    val = v @ (A @ v)
    # strain of a rotation vanishes; the jump penalty keeps the form positive
    assert val > 1e-3


def test_acr_spd_small():
    m = build_structured("right-split", 2)
    A = assemble_ACR(m).toarray()
    w = la.eigvalsh(A)
    assert w[0] > 0


def test_adg_symmetric_and_conforming_energy():
    m = build_structured("crisscross", 2)
    A = assemble_AdG(m, NOCHECK)
    assert np.abs((A - A.T).toarray()).max() <= 1e-13 * np.abs(A.toarray()).max()
    rng = np.random.default_rng(0)
    n = int((~m.is_boundary_vertex).sum())
    v = contp1_to_dgp1(m, rng.standard_normal(n))
    grads = dgp1_gradients(m, v)
    energy = float(np.dot(m.skeleton().area, np.einsum("tj,tj->t", grads, grads)))
    assert abs(v @ (A @ v) - energy) < 1e-12 * max(1.0, energy)


@pytest.mark.parametrize("n", [2, 4])
def test_adg_self_check_eta(n):
    m = build_structured("right-split", n)
    assert dg_smallest_eigenvalue(m, DGConfig(eta=10.0)) >= 0.1
    with pytest.raises(DGStabilityError):
        assemble_AdG(m, DGConfig(eta=0.01))


def test_b_alpha_sigma_zero_decouples():
    m = build_structured("right-split", 2)
    p = MaterialParams(mu=1.3, lam=2.0, alpha=0.0, sigma=0.0, kappa_bar=0.7, tau=1.0)
    sys = assemble_B(m, p, NOCHECK)
    fo = forms(m, NOCHECK)
    A = sys.matrix.toarray()
    nu = sys.n_u
    assert not np.any(A[:nu, nu:])
    assert not np.any(A[nu:, :nu])
    W = sp.diags(m.skeleton().area)
    uu = (2 * p.mu * fo.a_cr + p.lam * fo.div.T @ W @ fo.div).toarray()
    assert np.allclose(A[:nu, :nu], uu, atol=1e-14)
    assert np.allclose(A[nu:, nu:], (p.kappa * fo.a_dg).toarray(), atol=1e-14)


def test_b_coupling_blocks_skew():
    m = build_structured("crisscross", 2)
    p = MaterialParams(alpha=0.8)
    sys = assemble_B(m, p, NOCHECK)
    nu = sys.n_u
    A = sys.matrix.toarray()
    up = A[:nu, nu:]
    pu = A[nu:, :nu]
    scale = max(np.abs(up).max(), 1e-30)
    assert np.abs(up + pu.T).max() <= 1e-13 * scale


def test_b_diagonal_energy_positive():
    m = build_structured("right-split", 3)
    p = MaterialParams(mu=2.0, lam=10.0, alpha=1.0, sigma=0.5, kappa_bar=1e-2)
    sys = assemble_B(m, p, NOCHECK)
    fo = forms(m, NOCHECK)
    rng = np.random.default_rng(1)
    area = m.skeleton().area
    for _ in range(5):
        v = rng.standard_normal(sys.n_u)
        q = rng.standard_normal(sys.n_p)
        x = np.concatenate([v, q])
        got = x @ (sys.matrix @ x)
        divv = fo.div @ v
        pi0q = fo.pi0 @ q
        want = (
            2 * p.mu * (v @ (fo.a_cr @ v))
            + p.lam * float(area @ divv**2)
            + p.sigma * float(area @ pi0q**2)
            + p.kappa * (q @ (fo.a_dg @ q))
        )
        assert got > 0
        assert abs(got - want) < 1e-11 * abs(want)


def test_b_block_composition_bitlevel():
    m = build_structured("right-split", 2)
    p = MaterialParams(mu=1.5, lam=3.0, alpha=0.9, sigma=0.4, kappa_bar=0.2, tau=0.5)
    sys = assemble_B(m, p, NOCHECK)
    fo = forms(m, NOCHECK)
    W = sp.diags(m.skeleton().area)
    uu = 2.0 * p.mu * fo.a_cr + p.lam * (fo.div.T @ W @ fo.div)
    up = -p.alpha * (fo.div.T @ fo.pair_mass)
    pu = p.alpha * (fo.pair_mass.T @ fo.div)
    pp = p.sigma * (fo.pi0.T @ W @ fo.pi0) + p.kappa * fo.a_dg
    again = sp.bmat([[uu, up], [pu, pp]], format="csr")
    assert (sys.matrix != again).nnz == 0


def test_rhs_zero_loads():
    m = build_structured("right-split", 2)
    assert not np.any(assemble_rhs_smoothed(m, None, None))
    assert not np.any(assemble_rhs_plain(m, None, None))


def test_rhs_constant_g_matches_plain():
    m = build_structured("crisscross", 2)
    g = lambda x, y: np.ones_like(x)
    smooth = assemble_rhs_smoothed(m, None, g)
    plain = assemble_rhs_plain(m, None, g)
    nu = 2 * len(m.interior_faces)
    assert np.allclose(smooth[nu:], plain[nu:], atol=1e-13)


def test_rhs_piecewise_constant_f_difference_is_bubble_only():
    m = build_structured("right-split", 2)
    f = lambda x, y: (np.where(x < 0.5, 1.0, 2.0), np.zeros_like(y))
    smooth = assemble_rhs_smoothed(m, f, None)
    plain = assemble_rhs_plain(m, f, None)
    diff = np.linalg.norm(smooth - plain)
    assert np.isfinite(diff)
    assert diff < 1.0  # bounded correction, same global scale


def test_rhs_gap_decays_first_order():
    g = lambda x, y: np.sin(np.pi * x) * np.cos(2 * np.pi * y) + x * y
    gaps = []
    m = build_structured("right-split", 2)
    for _ in range(3):
        fo = forms(m, NOCHECK)
        nu = fo.n_u
        d = (assemble_rhs_smoothed(m, None, g) - assemble_rhs_plain(m, None, g))[nu:]
        # dual norm against the dG norm measures the load-functional gap
        z = spla.spsolve(fo.g_dg.tocsc(), d)
        gaps.append(np.sqrt(abs(d @ z)))
        m = refine_uniform(m)
    rates = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert rates[-1] > 0.8


def test_pair_div_annihilates_constants():
    m = build_structured("right-split", 3)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(2 * len(m.interior_faces))
    pair = assemble_pair_div(m)
    assert abs(np.ones(m.n_triangles) @ (pair @ v)) < 1e-12


def test_pair_mass_indicator():
    m = build_structured("right-split", 2)
    pair = assemble_pair_mass(m)
    q = np.zeros(m.n_triangles)
    q[1] = 1.0
    qf = np.zeros(3 * m.n_triangles)
    qf[3:6] = 1.0  # constant one on triangle 1
    assert abs(q @ (pair @ qf) - m.skeleton().area[1]) < 1e-15


def test_pairings_match_quadrature():
    m = build_structured("crisscross", 2)
    rng = np.random.default_rng(3)
    rule = quad_rule("triangle", 4)
    area = m.skeleton().area

    q0 = rng.standard_normal(m.n_triangles)
    v = Field(SpaceKind.CR2, rng.standard_normal(2 * len(m.interior_faces)))
    n = len(v.coeffs) // 2
    gx = dgp1_gradients(m, cr_to_dgp1(m, v.coeffs[:n]))
    gy = dgp1_gradients(m, cr_to_dgp1(m, v.coeffs[n:]))
    divv = gx[:, 0] + gy[:, 1]
    want = float(area @ (q0 * divv))
    got = float(q0 @ (assemble_pair_div(m) @ v.coeffs))
    assert abs(got - want) < 1e-12 * max(1.0, abs(want))

    qf = Field(SpaceKind.DGP1, rng.standard_normal(3 * m.n_triangles))
    vals = values_on_tris(m, qf, rule.points)
    want = float(area @ ((vals * q0[:, None]) @ rule.weights))
    got = float(q0 @ (assemble_pair_mass(m) @ qf.coeffs))
    assert abs(got - want) < 1e-12 * max(1.0, abs(want))


def test_material_params_validation():
    with pytest.raises(ValueError):
        MaterialParams(mu=-1.0)
    with pytest.raises(ValueError):
        MaterialParams(kappa_bar=0.0)
    with pytest.raises(ValueError):
        MaterialParams(sigma=-0.1)
    p = MaterialParams(kappa_bar=2.0, tau=0.25)
    assert p.kappa == 0.5


def test_rhs_smoothed_matches_direct_duality():
    # entry = integral of f . E_CR(basis) computed independently
    m = build_structured("right-split", 2)
    f = lambda x, y: (x * y, np.cos(x))
    rhs = assemble_rhs_smoothed(m, f, None)
    from crbiot.smoothers import smooth_E_CR

    n = len(m.interior_faces)
    rule = quad_rule("triangle", 8)
    xy = tri_points_xy(m, rule.points)
    fx, fy = f(xy[..., 0], xy[..., 1])
    area = m.skeleton().area
    for dof in (0, n // 2, 2 * n - 1):
        basis = Field(SpaceKind.CR2, np.zeros(2 * n))
        basis.coeffs[dof] = 1.0
        lifted = smooth_E_CR(m, basis)
        vals = vector_values_on_tris(m, lifted, rule.points)
        want = float(
            area @ ((fx * vals[..., 0] + fy * vals[..., 1]) @ rule.weights)
        )
        assert abs(rhs[dof] - want) < 1e-12 * max(1.0, abs(want))

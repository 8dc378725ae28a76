"""Sparse assembly of the coupled displacement/pressure system.

The system couples a vector Crouzeix-Raviart block (jump-penalized strain
form) with a symmetric interior penalty dG block for the fluid pressure,
a divergence coupling, and a reduced-integration storage term. Right-hand
sides come in two flavours: the smoothed one evaluates the loads against
the moment-preserving liftings of the test functions, the plain one tests
the loads directly.

Coefficient ordering of the coupled system: CR2 block (x dofs, then y
dofs), followed by the dGP1 block.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import (
    Field,
    SpaceKind,
    bary_gradients,
    cr_face_dofs,
    face_trace_tables,
    quad_rule,
    tri_points_xy,
)
from .mesh import Mesh
from .smoothers import bubble_load, smoother_assembly

__all__ = [
    "MaterialParams",
    "DGConfig",
    "LinearSystem",
    "DGStabilityError",
    "assemble_ACR",
    "assemble_AdG",
    "assemble_B",
    "assemble_rhs_smoothed",
    "assemble_rhs_plain",
    "assemble_pair_div",
    "assemble_pair_mass",
    "Forms",
    "forms",
    "dg_smallest_eigenvalue",
]


@dataclass(frozen=True)
class MaterialParams:
    """Material and time-step parameters; ``kappa = tau * kappa_bar``."""

    mu: float = 1.0
    lam: float = 1.0
    alpha: float = 1.0
    sigma: float = 1.0
    kappa_bar: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.mu <= 0 or self.lam <= 0:
            raise ValueError("mu and lambda must be positive")
        # alpha = 0 is admitted for the decoupled diagnostics
        if self.alpha < 0 or self.sigma < 0:
            raise ValueError("alpha and sigma must be nonnegative")
        if self.kappa_bar <= 0 or self.tau <= 0:
            raise ValueError("kappa_bar and tau must be positive")

    @property
    def kappa(self) -> float:
        return self.tau * self.kappa_bar


@dataclass(frozen=True)
class DGConfig:
    """Interior-penalty parameter with stability self-check control."""

    eta: float = 10.0
    check: bool = True
    min_eig: float = 0.1

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("penalty parameter eta must be positive")


class DGStabilityError(RuntimeError):
    """Penalty parameter too small for a stable interior-penalty form."""


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray | None
    n_u: int
    n_p: int


# -- CR block ---------------------------------------------------------------


def _eps_stiffness_cr2(mesh: Mesh) -> sp.csr_matrix:
    """Broken symmetric-gradient stiffness on the vector CR space."""
    sk = mesh.skeleton()
    grads = -2.0 * bary_gradients(mesh)  # CR basis gradients
    fd = cr_face_dofs(mesh)
    n = int(len(mesh.interior_faces))
    rows, cols, vals = [], [], []
    for t in range(mesh.n_triangles):
        g = grads[t]
        dof = fd[mesh.tri_faces[t]]
        # strain tensors of the 6 local vector basis functions
        eps = np.zeros((6, 2, 2))
        for i in range(3):
            eps[i, 0, 0] = g[i, 0]
            eps[i, 0, 1] = eps[i, 1, 0] = 0.5 * g[i, 1]
            eps[3 + i, 1, 1] = g[i, 1]
            eps[3 + i, 0, 1] = eps[3 + i, 1, 0] = 0.5 * g[i, 0]
        local = sk.area[t] * np.einsum("aij,bij->ab", eps, eps)
        gdof = np.concatenate([dof, np.where(dof >= 0, dof + n, -1)])
        for a in range(6):
            if gdof[a] < 0:
                continue
            for b in range(6):
                if gdof[b] < 0:
                    continue
                rows.append(gdof[a])
                cols.append(gdof[b])
                vals.append(local[a, b])
    return sp.coo_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n)).tocsr()


def _jump_gram_cr_scalar(mesh: Mesh) -> sp.csr_matrix:
    """Face penalty sum of h^-1 jump products for scalar CR fields."""
    fd = cr_face_dofs(mesh)
    n = int(len(mesh.interior_faces))
    tri, loc_a, loc_b = face_trace_tables(mesh)
    seg_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0  # h^-1 cancels |F|
    rows, cols, vals = [], [], []
    for f in range(mesh.n_faces):
        entries = []  # (dof, endpoint values, sign)
        for side in range(2):
            t = tri[f, side]
            if t < 0:
                continue
            sign = 1.0 if side == 0 else -1.0
            la, lb = loc_a[f, side], loc_b[f, side]
            for i in range(3):
                dof = fd[mesh.tri_faces[t, i]]
                if dof < 0:
                    continue
                # CR basis value at a vertex: -1 at the opposite one, else 1
                va = -1.0 if i == la else 1.0
                vb = -1.0 if i == lb else 1.0
                entries.append((dof, sign * np.array([va, vb])))
        for dof_a, ja in entries:
            for dof_b, jb in entries:
                rows.append(dof_a)
                cols.append(dof_b)
                vals.append(ja @ seg_mass @ jb)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def assemble_ACR(mesh: Mesh) -> sp.csr_matrix:
    """Strain form plus h^-1 jump penalty on the vector CR space (SPD)."""
    jump = _jump_gram_cr_scalar(mesh)
    return (_eps_stiffness_cr2(mesh) + sp.block_diag([jump, jump])).tocsr()


# -- dG block ---------------------------------------------------------------


def _dg_face_matrices(mesh: Mesh):
    """Consistency matrix C and unit jump Gram J of the dGP1 space.

    ``C[i, j] = sum_F int_F {grad phi_j} . n [phi_i]`` over all faces,
    ``J[i, j] = sum_F h^-1 int_F [phi_i][phi_j]``.
    """
    sk = mesh.skeleton()
    grads = bary_gradients(mesh)
    tri, loc_a, loc_b = face_trace_tables(mesh)
    seg_mass = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    ndg = 3 * mesh.n_triangles
    rc, cc, vc = [], [], []
    rj, cj, vj = [], [], []
    for f in range(mesh.n_faces):
        interior = not mesh.is_boundary_face[f]
        nrm = sk.normal[f]
        flen = sk.face_measure[f]
        jumps = []  # (dof, endpoint values of the jump)
        gn = []  # (dof, averaged normal gradient)
        for side in range(2):
            t = tri[f, side]
            if t < 0:
                continue
            sign = 1.0 if side == 0 else -1.0
            wavg = 0.5 if interior else 1.0
            la, lb = loc_a[f, side], loc_b[f, side]
            for i in range(3):
                dof = 3 * t + i
                va = 1.0 if i == la else 0.0
                vb = 1.0 if i == lb else 0.0
                jumps.append((dof, sign * np.array([va, vb])))
                gn.append((dof, wavg * float(grads[t, i] @ nrm)))
        for dof_a, ja in jumps:
            for dof_b, gb in gn:
                # int_F [phi_a] {grad phi_b}.n, affine jump integrated exactly
                rc.append(dof_a)
                cc.append(dof_b)
                vc.append(gb * flen * ja.mean())
            for dof_b, jb in jumps:
                rj.append(dof_a)
                cj.append(dof_b)
                vj.append(ja @ seg_mass @ jb)
    C = sp.coo_matrix((vc, (rc, cc)), shape=(ndg, ndg)).tocsr()
    J = sp.coo_matrix((vj, (rj, cj)), shape=(ndg, ndg)).tocsr()
    return C, J


def _dg_stiffness(mesh: Mesh) -> sp.csr_matrix:
    sk = mesh.skeleton()
    grads = bary_gradients(mesh)
    local = np.einsum("tij,tkj->tik", grads, grads) * sk.area[:, None, None]
    ndg = 3 * mesh.n_triangles
    rows = np.repeat(3 * np.arange(mesh.n_triangles), 9) + np.tile(
        np.repeat(np.arange(3), 3), mesh.n_triangles
    )
    cols = np.repeat(3 * np.arange(mesh.n_triangles), 9) + np.tile(
        np.tile(np.arange(3), 3), mesh.n_triangles
    )
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(ndg, ndg)).tocsr()


def dg_smallest_eigenvalue(mesh: Mesh, cfg: DGConfig) -> float:
    """Smallest eigenvalue of the interior-penalty form against its norm Gram."""
    K = _dg_stiffness(mesh)
    C, J = _dg_face_matrices(mesh)
    A = (K - C - C.T + cfg.eta * J).tocsr()
    G = (K + cfg.eta * J).tocsr()
    n = A.shape[0]
    if n <= 1200:
        import scipy.linalg as la

        w = la.eigh(A.toarray(), G.toarray(), eigvals_only=True)
        return float(w[0])
    w = spla.eigsh(A, k=1, M=G, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(w[0])


def assemble_AdG(mesh: Mesh, cfg: DGConfig) -> sp.csr_matrix:
    """Symmetric interior penalty form on dGP1, all faces included.

    Boundary faces enforce the homogeneous pressure condition weakly.
    Raises :class:`DGStabilityError` when the stability self-check fails.
    """
    K = _dg_stiffness(mesh)
    C, J = _dg_face_matrices(mesh)
    A = (K - C - C.T + cfg.eta * J).tocsr()
    if cfg.check:
        lam_min = dg_smallest_eigenvalue(mesh, cfg)
        if lam_min < cfg.min_eig:
            raise DGStabilityError(
                f"penalty eta={cfg.eta} too small: smallest eigenvalue "
                f"{lam_min:.3e} < {cfg.min_eig} against the dG norm"
            )
    return A


# -- pairings and projections ----------------------------------------------


def div_map_cr2(mesh: Mesh) -> sp.csr_matrix:
    """Coefficient map CR2 -> P0 holding the broken divergence."""
    grads = -2.0 * bary_gradients(mesh)
    fd = cr_face_dofs(mesh)
    n = int(len(mesh.interior_faces))
    rows, cols, vals = [], [], []
    for t in range(mesh.n_triangles):
        dof = fd[mesh.tri_faces[t]]
        for i in range(3):
            if dof[i] < 0:
                continue
            rows.extend([t, t])
            cols.extend([dof[i], dof[i] + n])
            vals.extend([grads[t, i, 0], grads[t, i, 1]])
    return sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_triangles, 2 * n)).tocsr()


def p0_projection_dgp1(mesh: Mesh) -> sp.csr_matrix:
    """Coefficient map dGP1 -> P0 of the elementwise mean."""
    nt = mesh.n_triangles
    return sp.coo_matrix(
        (np.full(3 * nt, 1.0 / 3.0), (np.repeat(np.arange(nt), 3), np.arange(3 * nt))),
        shape=(nt, 3 * nt),
    ).tocsr()


def assemble_pair_div(mesh: Mesh) -> sp.csr_matrix:
    """Pairing matrix of P0 test functions against broken CR divergences."""
    area = mesh.skeleton().area
    return (sp.diags(area) @ div_map_cr2(mesh)).tocsr()


def assemble_pair_mass(mesh: Mesh) -> sp.csr_matrix:
    """Pairing matrix (P0 x dGP1) of the L2 product."""
    area = mesh.skeleton().area
    return (sp.diags(area) @ p0_projection_dgp1(mesh)).tocsr()


def dg_mass(mesh: Mesh) -> sp.csr_matrix:
    area = mesh.skeleton().area
    nt = mesh.n_triangles
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    blocks = local[None, :, :] * area[:, None, None]
    rows = np.repeat(3 * np.arange(nt), 9) + np.tile(np.repeat(np.arange(3), 3), nt)
    cols = np.repeat(3 * np.arange(nt), 9) + np.tile(np.tile(np.arange(3), 3), nt)
    return sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(3 * nt, 3 * nt)).tocsr()


# -- coupled system ----------------------------------------------------------


@dataclass
class Forms:
    """All assembled operators of one (mesh, penalty) pair."""

    mesh: Mesh
    cfg: DGConfig
    a_cr: sp.csr_matrix
    a_dg: sp.csr_matrix
    g_dg: sp.csr_matrix  # Gram of the dG norm (stiffness + eta jump)
    jump_dg: sp.csr_matrix
    div: sp.csr_matrix
    pi0: sp.csr_matrix
    pair_div: sp.csr_matrix
    pair_mass: sp.csr_matrix
    m_dg: sp.csr_matrix
    n_u: int
    n_p: int
    _a_cr_lu: object = dc_field(default=None, repr=False)
    _a_dg_lu: object = dc_field(default=None, repr=False)

    def solve_a_cr(self, rhs: np.ndarray) -> np.ndarray:
        if self._a_cr_lu is None:
            self._a_cr_lu = spla.splu(self.a_cr.tocsc())
        return self._a_cr_lu.solve(rhs)

    def solve_a_dg(self, rhs: np.ndarray) -> np.ndarray:
        if self._a_dg_lu is None:
            self._a_dg_lu = spla.splu(self.a_dg.tocsc())
        return self._a_dg_lu.solve(rhs)


def forms(mesh: Mesh, cfg: DGConfig) -> Forms:
    """Assemble (or fetch the cached) operator set for a mesh and penalty."""
    cache = getattr(mesh, "_forms_cache", None)
    if cache is None:
        cache = {}
        mesh._forms_cache = cache
    key = (cfg.eta, cfg.check, cfg.min_eig)
    if key in cache:
        return cache[key]
    K = _dg_stiffness(mesh)
    C, J = _dg_face_matrices(mesh)
    a_dg = (K - C - C.T + cfg.eta * J).tocsr()
    if cfg.check:
        lam_min = dg_smallest_eigenvalue(mesh, cfg)
        if lam_min < cfg.min_eig:
            raise DGStabilityError(
                f"penalty eta={cfg.eta} too small: smallest eigenvalue "
                f"{lam_min:.3e} < {cfg.min_eig} against the dG norm"
            )
    out = Forms(
        mesh=mesh,
        cfg=cfg,
        a_cr=assemble_ACR(mesh),
        a_dg=a_dg,
        g_dg=(K + cfg.eta * J).tocsr(),
        jump_dg=J,
        div=div_map_cr2(mesh),
        pi0=p0_projection_dgp1(mesh),
        pair_div=assemble_pair_div(mesh),
        pair_mass=assemble_pair_mass(mesh),
        m_dg=dg_mass(mesh),
        n_u=2 * int(len(mesh.interior_faces)),
        n_p=3 * mesh.n_triangles,
    )
    cache[key] = out
    return out


def assemble_B(mesh: Mesh, params: MaterialParams, cfg: DGConfig) -> LinearSystem:
    """Coupled system matrix on the CR2 (+) dGP1 product space."""
    fo = forms(mesh, cfg)
    area = mesh.skeleton().area
    W = sp.diags(area)
    D, P0 = fo.div, fo.pi0

    uu = 2.0 * params.mu * fo.a_cr + params.lam * (D.T @ W @ D)
    up = -params.alpha * (D.T @ fo.pair_mass)
    pu = params.alpha * (fo.pair_mass.T @ D)
    pp = params.sigma * (P0.T @ W @ P0) + params.kappa * fo.a_dg
    matrix = sp.bmat([[uu, up], [pu, pp]], format="csr")
    return LinearSystem(matrix=matrix, rhs=None, n_u=fo.n_u, n_p=fo.n_p)


# -- right-hand sides --------------------------------------------------------


def assemble_rhs_smoothed(mesh: Mesh, f, g, degree: int = 8) -> np.ndarray:
    """Loads tested against the smoothed liftings of the basis functions.

    ``f`` maps (x, y) arrays to a pair of arrays (or is None for zero),
    ``g`` maps (x, y) to an array (or None).
    """
    sm = smoother_assembly(mesh)
    n_cr = int(len(mesh.interior_faces))
    out_u = np.zeros(2 * n_cr)
    if f is not None:
        fx = bubble_load(mesh, lambda x, y: np.asarray(f(x, y))[0], degree)
        fy = bubble_load(mesh, lambda x, y: np.asarray(f(x, y))[1], degree)
        out_u[:n_cr] = sm.e_cr.T @ fx
        out_u[n_cr:] = sm.e_cr.T @ fy
    out_p = np.zeros(3 * mesh.n_triangles)
    if g is not None:
        out_p = sm.smooth_e_dg.T @ bubble_load(mesh, g, degree)
    return np.concatenate([out_u, out_p])


def assemble_rhs_plain(mesh: Mesh, f, g, degree: int = 8) -> np.ndarray:
    """Loads tested directly against the nonconforming basis functions."""
    rule = quad_rule("triangle", degree)
    bary, w = rule.points, rule.weights
    xy = tri_points_xy(mesh, bary)
    area = mesh.skeleton().area
    fd = cr_face_dofs(mesh)
    n_cr = int(len(mesh.interior_faces))

    out_u = np.zeros(2 * n_cr)
    if f is not None:
        fvals = f(xy[..., 0], xy[..., 1])
        phi = 1.0 - 2.0 * bary  # (Q, 3) CR basis
        for comp in range(2):
            vals = np.asarray(fvals[comp], dtype=float) * w[None, :] * area[:, None]
            mom = vals @ phi  # (T, 3)
            for i in range(3):
                dof = fd[mesh.tri_faces[:, i]]
                keep = dof >= 0
                np.add.at(out_u, dof[keep] + comp * n_cr, mom[keep, i])

    out_p = np.zeros(3 * mesh.n_triangles)
    if g is not None:
        gvals = np.asarray(g(xy[..., 0], xy[..., 1]), dtype=float)
        vals = gvals * w[None, :] * area[:, None]
        out_p = (vals @ bary).ravel()
    return np.concatenate([out_u, out_p])

"""Moment-preserving maps from the nonconforming spaces into H^1_0.

The assembled sparse operators act on coefficient vectors:

* ``averaging``     dGP1 -> vertex averages (continuous P1 part);
* ``smooth_e``      dGP1 -> BUBBLE, preserving face averages;
* ``smooth_e_dg``   dGP1 -> BUBBLE, preserving face averages and cell means;
* ``smooth_f``      dGP1 -> BUBBLE, preserving all first-order cell moments;
* ``e_cr``          CR (scalar) -> BUBBLE, applied componentwise to vectors.

The interpolant onto piecewise constants is realized as the adjoint of
``smooth_f`` on the indicator basis, paired with quadrature moments of the
integrand.

All operators are linear with local (patch) sparsity; assemblies are cached
on the mesh and immutable afterwards.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fespace import (
    Field,
    SpaceKind,
    bubble_layout,
    cr_face_dofs,
    bubble_values,
    quad_rule,
    tri_points_xy,
    values_on_tris,
    zeros,
)
from .mesh import Mesh

__all__ = [
    "SmootherAssembly",
    "smoother_assembly",
    "averaging_A",
    "smooth_E",
    "smooth_E_CR",
    "smooth_E_dG",
    "smooth_F",
    "interp_I",
    "bubble_load",
]

# integrals over one triangle, relative to |T|:
#   lam_i lam_j S_T  ->  1/7 (i = j), 2/21 (i != j)
_M_LOC = (np.full((3, 3), 2.0) + np.eye(3)) / 21.0
_M_LOC_INV = 21.0 * np.eye(3) - 6.0 * np.ones((3, 3))


class SmootherAssembly:
    """Sparse matrices of all smoothing operators on one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        sk = mesh.skeleton()
        nt, nv, ne = mesh.n_triangles, mesh.n_vertices, mesh.n_faces
        ndg = 3 * nt
        _, self.face_off, self.tri_off, self.n_bubble = bubble_layout(mesh)

        tris = mesh.triangles
        area, flen = sk.area, sk.face_measure

        # vertex averaging: interior vertices get the mean one-sided value
        counts = np.zeros(nv)
        np.add.at(counts, tris.ravel(), 1.0)
        rows = tris.ravel()
        cols = np.arange(ndg)
        vals = 1.0 / counts[rows]
        interior_v = ~mesh.is_boundary_vertex
        keep = interior_v[rows]
        averaging = sp.coo_matrix(
            (vals[keep], (rows[keep], cols[keep])), shape=(nv, ndg)
        ).tocsr()

        # integral over a face of a vertex-value function: |F|/2 (w_a + w_b)
        fa, fb = mesh.faces[:, 0], mesh.faces[:, 1]
        face_of_vertex = sp.coo_matrix(
            (
                np.concatenate([flen / 2.0, flen / 2.0]),
                (np.concatenate([np.arange(ne), np.arange(ne)]),
                 np.concatenate([fa, fb])),
            ),
            shape=(ne, nv),
        ).tocsr()

        # integral over a face of the two-sided average of a dGP1 field
        r, c, v = [], [], []
        for f in np.flatnonzero(~mesh.is_boundary_face):
            w = flen[f] / 4.0
            for t in mesh.face_tris[f]:
                tv = tris[t]
                for endpoint in mesh.faces[f]:
                    loc = int(np.flatnonzero(tv == endpoint)[0])
                    r.append(f)
                    c.append(3 * t + loc)
                    v.append(w)
        trace_avg = sp.coo_matrix((v, (r, c)), shape=(ne, ndg)).tocsr()

        # face-bubble coefficients of the averaging correction
        face_rows = (trace_avg - face_of_vertex @ averaging).tocsr()

        # cell integrals: dGP1 and the smoothed field
        cell_int_dg = sp.coo_matrix(
            (
                np.repeat(area / 3.0, 3),
                (np.repeat(np.arange(nt), 3), np.arange(ndg)),
            ),
            shape=(nt, ndg),
        ).tocsr()
        cell_of_vertex = sp.coo_matrix(
            (
                np.repeat(area / 3.0, 3),
                (np.repeat(np.arange(nt), 3), tris.ravel()),
            ),
            shape=(nt, nv),
        ).tocsr()
        # integral of an adjacent face bubble over one triangle: |T|/(2|F|)
        tf = mesh.tri_faces
        cell_of_face = sp.coo_matrix(
            (
                (area[:, None] / (2.0 * flen[tf])).ravel(),
                (np.repeat(np.arange(nt), 3), tf.ravel()),
            ),
            shape=(nt, ne),
        ).tocsr()
        cell_int_smooth = cell_of_vertex @ averaging + cell_of_face @ face_rows

        expand = sp.coo_matrix(
            (np.ones(ndg), (np.arange(ndg), np.repeat(np.arange(nt), 3))),
            shape=(ndg, nt),
        ).tocsr()

        def stack(vertex_part, face_part, tri_part):
            return sp.vstack([vertex_part, face_part, tri_part]).tocsr()

        zero_tri = sp.csr_matrix((ndg, ndg))
        self.smooth_e = stack(averaging, face_rows, zero_tri)
        self.smooth_e_dg = stack(
            averaging, face_rows, expand @ (cell_int_dg - cell_int_smooth)
        )

        # first-order moments: rows (t, i) hold integral of lam_i * (.)
        mass = np.full((3, 3), 1.0 / 12.0) + np.eye(3) / 12.0
        r, c, v = [], [], []
        for i in range(3):
            for j in range(3):
                r.append(3 * np.arange(nt) + i)
                c.append(3 * np.arange(nt) + j)
                v.append(np.repeat(mass[i, j], nt) * area)
        p1_mass_rows = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(ndg, ndg),
        ).tocsr()
        r, c, v = [], [], []
        for i in range(3):
            for j in range(3):
                r.append(3 * np.arange(nt) + i)
                c.append(tris[:, j])
                v.append(np.repeat(mass[i, j], nt) * area)
        p1_vertex_rows = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(ndg, nv),
        ).tocsr()
        # integral of lam_i * S_F over T: |T|/(5|F|) at face endpoints,
        # |T|/(10|F|) at the opposite vertex
        r, c, v = [], [], []
        for i in range(3):
            for l in range(3):
                f = tf[:, l]
                w = area / (flen[f] * (10.0 if l == i else 5.0))
                r.append(3 * np.arange(nt) + i)
                c.append(f)
                v.append(w)
        p1_face_rows = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(ndg, ne),
        ).tocsr()

        moment_defect = (
            p1_mass_rows - p1_vertex_rows @ averaging - p1_face_rows @ face_rows
        )
        # local 3x3 solves: int_T lam_i lam_j S_T is dimensionless, the
        # defect moments carry the area factor
        block_inv = sp.block_diag([_M_LOC_INV] * nt, format="csr")
        self.smooth_f = stack(averaging, face_rows, block_inv @ moment_defect)

        # CR (scalar, interior-face dofs) -> dGP1 vertex values
        fd = cr_face_dofs(mesh)
        ncr = int(len(mesh.interior_faces))
        r, c, v = [], [], []
        for j in range(3):
            for i in range(3):
                dof = fd[tf[:, i]]
                keep = dof >= 0
                r.append((3 * np.arange(nt) + j)[keep])
                c.append(dof[keep])
                v.append(np.full(keep.sum(), -1.0 if i == j else 1.0))
        self.cr_to_dgp1_mat = sp.coo_matrix(
            (np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
            shape=(ndg, ncr),
        ).tocsr()
        self.e_cr = (self.smooth_e @ self.cr_to_dgp1_mat).tocsr()

        self.averaging = averaging
        self.face_rows = face_rows
        emb = sp.coo_matrix(
            (np.ones(ndg), (np.arange(ndg), np.repeat(np.arange(nt), 3))),
            shape=(ndg, nt),
        ).tocsr()
        self.f_on_p0 = (self.smooth_f @ emb).tocsr()


def smoother_assembly(mesh: Mesh) -> SmootherAssembly:
    """Build (or fetch the cached) smoother matrices for a mesh."""
    cached = getattr(mesh, "_smoothers", None)
    if cached is None:
        cached = SmootherAssembly(mesh)
        mesh._smoothers = cached
    return cached


def _as_dgp1(mesh: Mesh, field: Field) -> np.ndarray:
    if field.kind is SpaceKind.DGP1:
        return field.coeffs
    raise ValueError(f"expected a dGP1 field, got {field.kind}")


def averaging_A(mesh: Mesh, field: Field) -> Field:
    """Vertex averaging into continuous P1 with zero boundary values."""
    sm = smoother_assembly(mesh)
    vertex_vals = sm.averaging @ _as_dgp1(mesh, field)
    out = zeros(mesh, SpaceKind.CONT_P1)
    out.coeffs[:] = vertex_vals[~mesh.is_boundary_vertex]
    return out


def smooth_E(mesh: Mesh, field: Field) -> Field:
    """Averaging plus face-bubble correction of the face averages."""
    sm = smoother_assembly(mesh)
    return Field(SpaceKind.BUBBLE, sm.smooth_e @ _as_dgp1(mesh, field))


def smooth_E_dG(mesh: Mesh, field: Field) -> Field:
    """Face-average and cell-mean preserving smoothing of a dGP1 field."""
    sm = smoother_assembly(mesh)
    return Field(SpaceKind.BUBBLE, sm.smooth_e_dg @ _as_dgp1(mesh, field))


def smooth_F(mesh: Mesh, field: Field) -> Field:
    """First-order moment preserving smoothing of a dGP1 field."""
    sm = smoother_assembly(mesh)
    return Field(SpaceKind.BUBBLE, sm.smooth_f @ _as_dgp1(mesh, field))


def smooth_E_CR(mesh: Mesh, field: Field) -> Field:
    """Componentwise smoothing of a vector CR field."""
    if field.kind is not SpaceKind.CR2:
        raise ValueError(f"expected a CR2 field, got {field.kind}")
    sm = smoother_assembly(mesh)
    n = len(field.coeffs) // 2
    out = np.concatenate([sm.e_cr @ field.coeffs[:n], sm.e_cr @ field.coeffs[n:]])
    return Field(SpaceKind.BUBBLE2, out)


def bubble_load(mesh: Mesh, q, degree: int = 8) -> np.ndarray:
    """Moments of ``q`` against every BUBBLE basis function.

    ``q`` is a callable ``q(x, y)`` accepting arrays, or a scalar Field.
    """
    rule = quad_rule("triangle", degree)
    bary, w = rule.points, rule.weights
    sk = mesh.skeleton()
    if isinstance(q, Field):
        vals = values_on_tris(mesh, q, bary)
    else:
        xy = tri_points_xy(mesh, bary)
        vals = np.asarray(q(xy[..., 0], xy[..., 1]), dtype=float)

    out = np.zeros(bubble_layout(mesh)[3])
    _, fo, to, _ = bubble_layout(mesh)
    area, flen = sk.area, sk.face_measure
    wvals = vals * w[None, :] * area[:, None]  # (T, Q), carries |T| w_q q

    for i in range(3):
        np.add.at(out, mesh.triangles[:, i], wvals @ bary[:, i])
    cubic = bary[:, 0] * bary[:, 1] * bary[:, 2]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        f = mesh.tri_faces[:, i]
        contrib = (wvals @ (bary[:, a] * bary[:, b])) * 6.0 / flen[f]
        interior = ~mesh.is_boundary_face[f]
        np.add.at(out, fo + f[interior], contrib[interior])
        out[to + 3 * np.arange(mesh.n_triangles) + i] = (
            (wvals @ (bary[:, i] * cubic)) * 60.0 / area
        )
    return out


def interp_I(mesh: Mesh, q, degree: int = 8) -> Field:
    """L2- and H^-1-stable interpolation of ``q`` onto piecewise constants."""
    sm = smoother_assembly(mesh)
    load = bubble_load(mesh, q, degree)
    area = mesh.skeleton().area
    return Field(SpaceKind.P0, (sm.f_on_p0.T @ load) / area)

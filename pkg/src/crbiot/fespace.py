"""Discrete spaces, basis evaluation, quadrature, and bubble functions.

Supported coefficient layouts (see :class:`SpaceKind`):

* ``CR``        one dof per interior face, midpoint value convention;
* ``CR2``       vector field, x-block followed by y-block of CR dofs;
* ``DGP1``      3 dofs per triangle, local vertex values (barycentric basis);
* ``P0``        one dof per triangle;
* ``P0_MEAN0``  P0 coefficients with area-weighted zero mean;
* ``CONT_P1``   one dof per interior vertex (zero boundary values);
* ``BUBBLE``    H1-conforming enrichment ``contP1 + sum_F c_F S_F +
  sum_T (sum_i c_{T,i} lam_i) S_T`` stored as one flat vector
  ``[vertex values (V) | face coefficients (E) | triangle coefficients (3T)]``
  with structural zeros at boundary vertices/faces;
* ``BUBBLE2``   vector version, x-block followed by y-block.

Quadrature rules are symmetric, exact to their stated degree, and validated
against monomial integrals at construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import factorial

import numpy as np

from .mesh import Mesh, MeshError

__all__ = [
    "SpaceKind",
    "Field",
    "DofMap",
    "QuadRule",
    "quad_rule",
    "build_dofmap",
    "eval_basis",
    "bubble",
    "project_P0",
    "project_P0_mean0",
    "FespaceError",
]


class FespaceError(ValueError):
    """Raised for invalid space, quadrature, or field input."""


class SpaceKind(Enum):
    CR = "CR"
    CR2 = "CR2"
    DGP1 = "dGP1"
    P0 = "P0"
    P0_MEAN0 = "P0mean0"
    CONT_P1 = "contP1"
    BUBBLE = "bubbleH1"
    BUBBLE2 = "bubbleH1^2"


@dataclass
class Field:
    """Coefficient vector tagged with its space kind."""

    kind: SpaceKind
    coeffs: np.ndarray

    def copy(self) -> "Field":
        return Field(self.kind, self.coeffs.copy())


@dataclass(frozen=True)
class DofMap:
    """Dof bookkeeping for one discrete space on one mesh.

    ``tri_dofs`` lists the global dof of each local basis function per
    triangle; -1 marks a local function whose dof was eliminated by the
    zero-boundary condition (CR on boundary faces, P1 at boundary
    vertices).
    """

    kind: SpaceKind
    n_dofs: int
    tri_dofs: np.ndarray
    attach: str  # 'face' | 'triangle' | 'vertex'
    dirichlet: np.ndarray


@dataclass(frozen=True)
class QuadRule:
    """Reference-domain quadrature rule.

    For triangles, ``points`` holds barycentric coordinates (Q, 3) and the
    weights are normalized so that ``integral = |T| * sum(w * f(points))``.
    For edges, ``points`` holds parameters in (0, 1), weights sum to one.
    """

    domain: str
    degree: int
    points: np.ndarray
    weights: np.ndarray


def _exact_bary_monomial(a: int, b: int, c: int) -> float:
    # integral of lam1^a lam2^b lam3^c over T, divided by |T|
    return (
        factorial(a) * factorial(b) * factorial(c) * 2.0
        / factorial(a + b + c + 2)
    )


@lru_cache(maxsize=None)
def quad_rule(domain: str, degree: int) -> QuadRule:
    """Symmetric quadrature rule exact to ``degree`` on triangle or edge."""
    if domain == "edge":
        if not 1 <= degree <= 11:
            raise FespaceError(f"edge quadrature degree {degree} unsupported")
        npts = (degree + 2) // 2
        x, w = np.polynomial.legendre.leggauss(npts)
        pts = 0.5 * (x + 1.0)
        wts = 0.5 * w
        for k in range(degree + 1):
            got = float(np.dot(wts, pts**k))
            if abs(got - 1.0 / (k + 1)) > 1e-13:
                raise FespaceError("edge rule failed monomial validation")
        return QuadRule("edge", degree, pts, wts)

    if domain == "triangle":
        if not 1 <= degree <= 10:
            raise FespaceError(f"triangle quadrature degree {degree} unsupported")
        m = (degree + 3) // 2  # Duffy map raises the degree in one direction
        x, w = np.polynomial.legendre.leggauss(m)
        u = 0.5 * (x + 1.0)
        wu = 0.5 * w
        uu, vv = np.meshgrid(u, u, indexing="ij")
        ww = np.outer(wu, wu) * (1.0 - uu)
        xx = uu.ravel()
        yy = (vv * (1.0 - uu)).ravel()
        ww = ww.ravel()
        bary = np.stack([1.0 - xx - yy, xx, yy], axis=1)
        # average over the symmetry group of the reference triangle
        perms = [(0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2)]
        pts = np.vstack([bary[:, p] for p in perms])
        wts = np.tile(ww / 6.0, len(perms))
        wts = wts / wts.sum()
        for a in range(degree + 1):
            for b in range(degree + 1 - a):
                c = degree - a - b
                got = float(
                    np.dot(wts, pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c)
                )
                if abs(got - _exact_bary_monomial(a, b, c)) > 1e-13:
                    raise FespaceError("triangle rule failed monomial validation")
        return QuadRule("triangle", degree, pts, wts)

    raise FespaceError(f"unknown quadrature domain {domain!r}")


# -- dof maps -------------------------------------------------------------


def cr_face_dofs(mesh: Mesh) -> np.ndarray:
    """Map face index -> CR dof index (-1 on boundary faces)."""
    dof = np.full(mesh.n_faces, -1, dtype=np.int64)
    interior = mesh.interior_faces
    dof[interior] = np.arange(len(interior))
    return dof


def contp1_vertex_dofs(mesh: Mesh) -> np.ndarray:
    """Map vertex index -> contP1 dof index (-1 on boundary vertices)."""
    dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
    interior = np.flatnonzero(~mesh.is_boundary_vertex)
    dof[interior] = np.arange(len(interior))
    return dof


def build_dofmap(mesh: Mesh, kind: SpaceKind) -> DofMap:
    nt = mesh.n_triangles
    if kind is SpaceKind.CR:
        fd = cr_face_dofs(mesh)
        tri = fd[mesh.tri_faces]
        n = int(len(mesh.interior_faces))
        return DofMap(kind, n, tri, "face", np.zeros(n, dtype=bool))
    if kind is SpaceKind.CR2:
        fd = cr_face_dofs(mesh)
        tri = fd[mesh.tri_faces]
        n = int(len(mesh.interior_faces))
        tri2 = np.concatenate([tri, np.where(tri >= 0, tri + n, -1)], axis=1)
        return DofMap(kind, 2 * n, tri2, "face", np.zeros(2 * n, dtype=bool))
    if kind is SpaceKind.DGP1:
        tri = 3 * np.arange(nt)[:, None] + np.arange(3)[None, :]
        return DofMap(kind, 3 * nt, tri, "triangle", np.zeros(3 * nt, dtype=bool))
    if kind in (SpaceKind.P0, SpaceKind.P0_MEAN0):
        tri = np.arange(nt)[:, None]
        return DofMap(kind, nt, tri, "triangle", np.zeros(nt, dtype=bool))
    if kind is SpaceKind.CONT_P1:
        vd = contp1_vertex_dofs(mesh)
        tri = vd[mesh.triangles]
        n = int((~mesh.is_boundary_vertex).sum())
        return DofMap(kind, n, tri, "vertex", np.zeros(n, dtype=bool))
    raise FespaceError(f"no dof map for kind {kind}")


def bubble_layout(mesh: Mesh):
    """Offsets (vertex, face, triangle, total) of the flat BUBBLE layout."""
    v, e, t = mesh.n_vertices, mesh.n_faces, mesh.n_triangles
    return 0, v, v + e, v + e + 3 * t


def zeros(mesh: Mesh, kind: SpaceKind) -> Field:
    sizes = {
        SpaceKind.CR: len(mesh.interior_faces),
        SpaceKind.CR2: 2 * len(mesh.interior_faces),
        SpaceKind.DGP1: 3 * mesh.n_triangles,
        SpaceKind.P0: mesh.n_triangles,
        SpaceKind.P0_MEAN0: mesh.n_triangles,
        SpaceKind.CONT_P1: int((~mesh.is_boundary_vertex).sum()),
        SpaceKind.BUBBLE: bubble_layout(mesh)[3],
        SpaceKind.BUBBLE2: 2 * bubble_layout(mesh)[3],
    }
    return Field(kind, np.zeros(sizes[kind]))


# -- geometry helpers ------------------------------------------------------


def bary_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area = mesh.skeleton().area
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * area)[:, None, None]
    return grads


def tri_points_xy(mesh: Mesh, bary: np.ndarray) -> np.ndarray:
    """Physical coordinates of barycentric points, shape (T, Q, 2)."""
    p = mesh.vertices[mesh.triangles]
    return np.einsum("qi,tij->tqj", bary, p)


# -- basis evaluation ------------------------------------------------------


def eval_basis(kind: SpaceKind, mesh: Mesh, tri: int, bary) -> tuple:
    """Local basis values and gradients of ``kind`` at one barycentric point.

    Returns ``(values, grads)`` with shapes (nloc,) and (nloc, 2).
    """
    lam = np.asarray(bary, dtype=float)
    if lam.shape != (3,) or np.any(lam < -1e-12) or abs(lam.sum() - 1.0) > 1e-12:
        raise FespaceError("point must be barycentric inside the triangle")
    g = bary_gradients(mesh)[tri]
    if kind is SpaceKind.CR:
        return 1.0 - 2.0 * lam, -2.0 * g
    if kind in (SpaceKind.DGP1, SpaceKind.CONT_P1):
        return lam.copy(), g.copy()
    if kind is SpaceKind.P0:
        return np.ones(1), np.zeros((1, 2))
    raise FespaceError(f"eval_basis does not support kind {kind}")


def cr_to_dgp1(mesh: Mesh, cr_coeffs: np.ndarray) -> np.ndarray:
    """Vertex-value (dGP1) coefficients of a scalar CR field.

    Boundary-face dofs are eliminated, i.e. treated as zero midpoint
    values.
    """
    fd = cr_face_dofs(mesh)
    c = np.zeros(mesh.n_faces)
    c[fd >= 0] = cr_coeffs
    local = c[mesh.tri_faces]  # (T, 3) midpoint values
    total = local.sum(axis=1, keepdims=True)
    return (total - 2.0 * local).ravel()


def dgp1_values(mesh: Mesh, coeffs: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate a dGP1 coefficient vector at barycentric points, (T, Q)."""
    return np.einsum("ti,qi->tq", coeffs.reshape(-1, 3), bary)


def dgp1_gradients(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """Constant per-triangle gradients of a dGP1 field, (T, 2)."""
    return np.einsum("ti,tij->tj", coeffs.reshape(-1, 3), bary_gradients(mesh))


def contp1_to_dgp1(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    vd = contp1_vertex_dofs(mesh)
    vals = np.zeros(mesh.n_vertices)
    vals[vd >= 0] = coeffs
    return vals[mesh.triangles].ravel()


def bubble_values(mesh: Mesh, coeffs: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate a flat BUBBLE coefficient vector, (T, Q)."""
    _, fo, to, _ = bubble_layout(mesh)
    sk = mesh.skeleton()
    vvals = coeffs[: mesh.n_vertices][mesh.triangles]  # (T, 3)
    out = np.einsum("ti,qi->tq", vvals, bary)

    fc = coeffs[fo : fo + mesh.n_faces]
    # face bubble opposite local vertex i: (6/|F|) lam_{i+1} lam_{i+2}
    for i in range(3):
        f = mesh.tri_faces[:, i]
        scale = 6.0 * fc[f] / sk.face_measure[f]
        out += scale[:, None] * (bary[None, :, (i + 1) % 3] * bary[None, :, (i + 2) % 3])

    tc = coeffs[to:].reshape(-1, 3)
    cubic = (60.0 / sk.area)[:, None] * (bary[:, 0] * bary[:, 1] * bary[:, 2])[None, :]
    out += np.einsum("ti,qi->tq", tc, bary) * cubic
    return out


def bubble_gradients(mesh: Mesh, coeffs: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Gradients of a flat BUBBLE coefficient vector, (T, Q, 2)."""
    _, fo, to, _ = bubble_layout(mesh)
    sk = mesh.skeleton()
    g = bary_gradients(mesh)  # (T, 3, 2)
    nq = len(bary)

    vvals = coeffs[: mesh.n_vertices][mesh.triangles]
    out = np.repeat(
        np.einsum("ti,tij->tj", vvals, g)[:, None, :], nq, axis=1
    )

    fc = coeffs[fo : fo + mesh.n_faces]
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        f = mesh.tri_faces[:, i]
        scale = 6.0 * fc[f] / sk.face_measure[f]
        grad_ab = (
            bary[None, :, a, None] * g[:, None, b, :]
            + bary[None, :, b, None] * g[:, None, a, :]
        )
        out += scale[:, None, None] * grad_ab

    tc = coeffs[to:].reshape(-1, 3)
    p1 = np.einsum("ti,qi->tq", tc, bary)
    p1_grad = np.einsum("ti,tij->tj", tc, g)
    cubic = bary[:, 0] * bary[:, 1] * bary[:, 2]
    cubic_grad = np.zeros((mesh.n_triangles, nq, 2))
    for i in range(3):
        a, b = (i + 1) % 3, (i + 2) % 3
        cubic_grad += (bary[None, :, a] * bary[None, :, b])[:, :, None] * g[:, None, i, :]
    s = (60.0 / sk.area)[:, None]
    out += (s * p1)[:, :, None] * cubic_grad
    out += (s * cubic[None, :])[:, :, None] * p1_grad[:, None, :]
    return out


def values_on_tris(mesh: Mesh, field: Field, bary: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field at barycentric points, (T, Q)."""
    k, c = field.kind, field.coeffs
    if k is SpaceKind.DGP1:
        return dgp1_values(mesh, c, bary)
    if k is SpaceKind.CR:
        return dgp1_values(mesh, cr_to_dgp1(mesh, c), bary)
    if k in (SpaceKind.P0, SpaceKind.P0_MEAN0):
        return np.repeat(c[:, None], len(bary), axis=1)
    if k is SpaceKind.CONT_P1:
        return dgp1_values(mesh, contp1_to_dgp1(mesh, c), bary)
    if k is SpaceKind.BUBBLE:
        return bubble_values(mesh, c, bary)
    raise FespaceError(f"cannot evaluate kind {k}")


def vector_values_on_tris(mesh: Mesh, field: Field, bary: np.ndarray) -> np.ndarray:
    """Evaluate a vector field, (T, Q, 2)."""
    if field.kind is SpaceKind.CR2:
        n = len(field.coeffs) // 2
        vx = values_on_tris(mesh, Field(SpaceKind.CR, field.coeffs[:n]), bary)
        vy = values_on_tris(mesh, Field(SpaceKind.CR, field.coeffs[n:]), bary)
    elif field.kind is SpaceKind.BUBBLE2:
        n = len(field.coeffs) // 2
        vx = bubble_values(mesh, field.coeffs[:n], bary)
        vy = bubble_values(mesh, field.coeffs[n:], bary)
    else:
        raise FespaceError(f"not a vector kind: {field.kind}")
    return np.stack([vx, vy], axis=-1)


# -- bubbles ---------------------------------------------------------------


def bubble(mesh: Mesh, face: int | None = None, tri: int | None = None) -> Field:
    """Face bubble S_F (interior faces only) or triangle bubble S_T.

    Scaled so that the face integral of S_F over its own face and the
    triangle integral of S_T over its own triangle are one.
    """
    if (face is None) == (tri is None):
        raise FespaceError("pass exactly one of face= or tri=")
    out = zeros(mesh, SpaceKind.BUBBLE)
    _, fo, to, _ = bubble_layout(mesh)
    if face is not None:
        if not 0 <= face < mesh.n_faces:
            raise FespaceError(f"face index {face} out of range")
        if mesh.is_boundary_face[face]:
            raise FespaceError(f"face {face} is a boundary face; no face bubble")
        out.coeffs[fo + face] = 1.0
    else:
        if not 0 <= tri < mesh.n_triangles:
            raise FespaceError(f"triangle index {tri} out of range")
        out.coeffs[to + 3 * tri : to + 3 * tri + 3] = 1.0
    return out


# -- projections -----------------------------------------------------------


def tri_averages(mesh: Mesh, q, degree: int = 8) -> np.ndarray:
    """Per-triangle averages of a callable or Field."""
    if isinstance(q, Field):
        k, c = q.kind, q.coeffs
        if k in (SpaceKind.P0, SpaceKind.P0_MEAN0):
            return c.copy()
        if k is SpaceKind.DGP1:
            return c.reshape(-1, 3).mean(axis=1)
        if k is SpaceKind.CR:
            return cr_to_dgp1(mesh, c).reshape(-1, 3).mean(axis=1)
        if k is SpaceKind.CONT_P1:
            return contp1_to_dgp1(mesh, c).reshape(-1, 3).mean(axis=1)
        if k is SpaceKind.BUBBLE:
            rule = quad_rule("triangle", 4)
            vals = bubble_values(mesh, c, rule.points)
            return vals @ rule.weights
        raise FespaceError(f"cannot project kind {k}")
    rule = quad_rule("triangle", degree)
    xy = tri_points_xy(mesh, rule.points)
    vals = np.asarray(q(xy[..., 0], xy[..., 1]), dtype=float)
    return vals @ rule.weights


def project_P0(mesh: Mesh, q, degree: int = 8) -> Field:
    """L2-orthogonal projection onto piecewise constants."""
    return Field(SpaceKind.P0, tri_averages(mesh, q, degree))


def project_P0_mean0(mesh: Mesh, q, degree: int = 8) -> Field:
    """L2-orthogonal projection onto mean-zero piecewise constants."""
    avg = tri_averages(mesh, q, degree)
    area = mesh.skeleton().area
    avg = avg - np.dot(area, avg) / area.sum()
    return Field(SpaceKind.P0_MEAN0, avg)


def mean0_part(mesh: Mesh, p0_coeffs: np.ndarray) -> np.ndarray:
    """Subtract the area-weighted mean from P0 coefficients."""
    area = mesh.skeleton().area
    return p0_coeffs - np.dot(area, p0_coeffs) / area.sum()


# -- integrals of products (exact, for polynomial fields) ------------------


def integrate(mesh: Mesh, tri_q_values: np.ndarray, rule: QuadRule) -> float:
    """Sum over triangles of |T| * weighted point values."""
    area = mesh.skeleton().area
    return float(area @ (tri_q_values @ rule.weights))


def face_trace_integrals(mesh: Mesh, dgp1_coeffs: np.ndarray) -> np.ndarray:
    """Integral over each face of the one-sided traces, shape (E, 2).

    The second column is NaN on boundary faces.
    """
    tri, loc_a, loc_b = face_trace_tables(mesh)
    flen = mesh.skeleton().face_measure
    c = dgp1_coeffs.reshape(-1, 3)
    out = np.full((mesh.n_faces, 2), np.nan)
    for f in range(mesh.n_faces):
        for side in range(2):
            t = tri[f, side]
            if t < 0:
                continue
            va = c[t, loc_a[f, side]]
            vb = c[t, loc_b[f, side]]
            out[f, side] = 0.5 * flen[f] * (va + vb)
    return out


def face_integral_bubble(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """Exact integral of a BUBBLE field over each face, shape (E,).

    Triangle bubbles vanish on the skeleton; a face bubble integrates to
    one over its own face and to zero over every other face.
    """
    _, fo, _, _ = bubble_layout(mesh)
    flen = mesh.skeleton().face_measure
    w = coeffs[: mesh.n_vertices]
    a, b = mesh.faces[:, 0], mesh.faces[:, 1]
    out = 0.5 * flen * (w[a] + w[b])
    out += coeffs[fo : fo + mesh.n_faces]
    return out


def tri_integral_bubble(mesh: Mesh, coeffs: np.ndarray) -> np.ndarray:
    """Exact integral of a BUBBLE field over each triangle, shape (T,)."""
    _, fo, to, _ = bubble_layout(mesh)
    sk = mesh.skeleton()
    w = coeffs[: mesh.n_vertices][mesh.triangles]
    out = sk.area / 3.0 * w.sum(axis=1)
    fc = coeffs[fo : fo + mesh.n_faces][mesh.tri_faces]
    out += (sk.area[:, None] / (2.0 * sk.face_measure[mesh.tri_faces]) * fc).sum(axis=1)
    tc = coeffs[to:].reshape(-1, 3)
    out += tc.mean(axis=1)  # int of lam_i S_T over T is 1/3
    return out


def face_trace_tables(mesh: Mesh):
    """Per-face trace bookkeeping.

    Returns ``(tri, loc_a, loc_b)`` arrays of shape (E, 2): for each face
    and each side (second side -1 padded on the boundary), the adjacent
    triangle and the local vertex indices of the face endpoints in that
    triangle's ordering.
    """
    E = mesh.n_faces
    tri = mesh.face_tris.copy()
    loc_a = np.full((E, 2), -1, dtype=np.int64)
    loc_b = np.full((E, 2), -1, dtype=np.int64)
    for f in range(E):
        a, b = mesh.faces[f]
        for side in range(2):
            t = tri[f, side]
            if t < 0:
                continue
            tv = mesh.triangles[t]
            loc_a[f, side] = int(np.flatnonzero(tv == a)[0])
            loc_b[f, side] = int(np.flatnonzero(tv == b)[0])
    return tri, loc_a, loc_b

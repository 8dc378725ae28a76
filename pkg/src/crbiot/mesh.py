"""Conforming triangulations of polygonal 2D domains with full face topology.

A :class:`Mesh` stores vertices and positively oriented triangles and derives
the face (edge) topology needed by nonconforming elements: the list of faces,
the one or two triangles adjacent to each face, and boundary flags.
:class:`SkeletonData` collects the per-face and per-triangle metric data
(unit normals, face lengths, areas, diameters).

Meshes are immutable after construction; refinement and file I/O return new
objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "SkeletonData",
    "MeshError",
    "build_structured",
    "refine_uniform",
    "shape_parameter",
    "read_mesh",
    "write_mesh",
]


class MeshError(ValueError):
    """Raised for invalid mesh input or violated mesh invariants."""


@dataclass(frozen=True)
class SkeletonData:
    """Metric data of a mesh and its skeleton.

    Attributes
    ----------
    normal : (E, 2) array
        Unit normal per face. For interior faces it points from the
        lower-index adjacent triangle into the higher-index one; for
        boundary faces it is the outward normal of the single adjacent
        triangle.
    h_face : (E,) array
        Face diameter (equals the face length in 2D).
    face_measure : (E,) array
        One-dimensional measure of each face.
    area : (T,) array
        Triangle areas.
    diameter : (T,) array
        Triangle diameters (longest edge).
    """

    normal: np.ndarray
    h_face: np.ndarray
    face_measure: np.ndarray
    area: np.ndarray
    diameter: np.ndarray


class Mesh:
    """Conforming triangle mesh with oriented face topology.

    Parameters
    ----------
    vertices : (V, 2) array_like
        Vertex coordinates.
    triangles : (T, 3) array_like
        Vertex indices per triangle, counterclockwise.

    Derived attributes
    ------------------
    faces : (E, 2) int array
        Vertex pairs, one row per face (interior faces listed once).
    face_tris : (E, 2) int array
        Adjacent triangle indices per face; second entry is -1 for
        boundary faces, otherwise the two entries are increasing.
    tri_faces : (T, 3) int array
        Face index opposite each local vertex.
    is_boundary_face, is_boundary_vertex : bool arrays
    """

    def __init__(self, vertices, triangles):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be a (V, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be a (T, 3) array")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshError("triangle vertex index out of range")
        # crisscross macro-cell table and grid size, set by build_structured
        self.crisscross_cells = None
        self.crisscross_n = None
        self._build_topology()
        self._validate()
        self._skeleton = None

    # -- construction ----------------------------------------------------

    def _build_topology(self):
        tris = self.triangles
        n_tri = len(tris)
        # edge opposite local vertex i connects local vertices i+1, i+2
        raw = np.empty((3 * n_tri, 2), dtype=np.int64)
        for i in range(3):
            raw[i::3, 0] = tris[:, (i + 1) % 3]
            raw[i::3, 1] = tris[:, (i + 2) % 3]
        key = np.sort(raw, axis=1)
        faces, inverse = np.unique(key, axis=0, return_inverse=True)
        n_face = len(faces)

        self.faces = faces
        self.tri_faces = inverse.reshape(n_tri, 3)

        face_tris = np.full((n_face, 2), -1, dtype=np.int64)
        count = np.zeros(n_face, dtype=np.int64)
        for t in range(n_tri):
            for i in range(3):
                f = self.tri_faces[t, i]
                if count[f] >= 2:
                    raise MeshError(f"face {f} adjacent to more than two triangles")
                face_tris[f, count[f]] = t
                count[f] += 1
        self.face_tris = face_tris
        self.is_boundary_face = count == 1

        self.is_boundary_vertex = np.zeros(len(self.vertices), dtype=bool)
        bnd = self.faces[self.is_boundary_face]
        self.is_boundary_vertex[bnd.ravel()] = True

    def _validate(self):
        tris = self.triangles
        if len(np.unique(np.sort(tris, axis=1), axis=0)) != len(tris):
            raise MeshError("duplicate triangles")
        if np.any(tris[:, 0] == tris[:, 1]) or np.any(tris[:, 1] == tris[:, 2]) \
                or np.any(tris[:, 0] == tris[:, 2]):
            raise MeshError("degenerate triangle (repeated vertex)")
        if np.any(self.signed_areas() <= 0.0):
            raise MeshError("triangle with nonpositive signed area")

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    # -- counts ----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary_face)

    # -- metrics ---------------------------------------------------------

    def skeleton(self) -> SkeletonData:
        """Per-face normals and meshsizes, per-triangle measures (cached)."""
        if self._skeleton is not None:
            return self._skeleton
        verts = self.vertices
        p = verts[self.triangles]
        area = self.signed_areas()
        sides = np.stack(
            [
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            ],
            axis=1,
        )
        diameter = sides.max(axis=1)

        a = verts[self.faces[:, 0]]
        b = verts[self.faces[:, 1]]
        edge = b - a
        length = np.linalg.norm(edge, axis=1)
        normal = np.stack([edge[:, 1], -edge[:, 0]], axis=1) / length[:, None]
        # orient away from the first (owning) adjacent triangle
        owner = self.face_tris[:, 0]
        centroid = p[owner].mean(axis=1)
        midpoint = 0.5 * (a + b)
        flip = np.einsum("ij,ij->i", normal, midpoint - centroid) < 0.0
        normal[flip] *= -1.0

        self._skeleton = SkeletonData(
            normal=normal,
            h_face=length.copy(),
            face_measure=length,
            area=area,
            diameter=diameter,
        )
        return self._skeleton


def build_structured(kind: str, n: int) -> Mesh:
    """Structured unit-square mesh.

    ``right-split`` cuts each of the n x n cells along one diagonal
    (2 n^2 triangles). ``crisscross`` adds the cell centers and cuts along
    both diagonals (4 n^2 triangles); the per-cell triangles are ordered
    bottom, right, top, left and the macro-cell table is stored on the
    mesh for the checkerboard-mode diagnostics.
    """
    if n < 1:
        raise MeshError(f"subdivision count must be >= 1, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def vid(i, j):
        return j * (n + 1) + i

    if kind == "right-split":
        tris = []
        for j in range(n):
            for i in range(n):
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                tris.append((a, b, c))
                tris.append((a, c, d))
        return Mesh(grid, np.array(tris))
    if kind == "crisscross":
        centers = np.empty((n * n, 2))
        tris = []
        cells = []
        for j in range(n):
            for i in range(n):
                m = (n + 1) ** 2 + j * n + i
                centers[j * n + i] = ((xs[i] + xs[i + 1]) / 2, (xs[j] + xs[j + 1]) / 2)
                a, b = vid(i, j), vid(i + 1, j)
                c, d = vid(i + 1, j + 1), vid(i, j + 1)
                base = len(tris)
                tris.extend([(a, b, m), (b, c, m), (c, d, m), (d, a, m)])
                cells.append((base, base + 1, base + 2, base + 3))
        mesh = Mesh(np.vstack([grid, centers]), np.array(tris))
        mesh.crisscross_cells = np.array(cells)
        mesh.crisscross_n = n
        return mesh
    raise MeshError(f"unknown structured mesh kind {kind!r}")


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: split every triangle into 4 congruent children."""
    verts = mesh.vertices
    mid = 0.5 * (verts[mesh.faces[:, 0]] + verts[mesh.faces[:, 1]])
    new_verts = np.vstack([verts, mid])
    off = mesh.n_vertices

    t = mesh.triangles
    m = off + mesh.tri_faces  # midpoint vertex of face opposite local vertex i
    children = np.empty((4 * mesh.n_triangles, 3), dtype=np.int64)
    children[0::4] = np.stack([t[:, 0], m[:, 2], m[:, 1]], axis=1)
    children[1::4] = np.stack([t[:, 1], m[:, 0], m[:, 2]], axis=1)
    children[2::4] = np.stack([t[:, 2], m[:, 1], m[:, 0]], axis=1)
    children[3::4] = np.stack([m[:, 0], m[:, 1], m[:, 2]], axis=1)
    return Mesh(new_verts, children)


def shape_parameter(mesh: Mesh) -> float:
    """Largest ratio of triangle diameter to inscribed-ball diameter.

    The inscribed diameter of a triangle is 2*area/semiperimeter.
    """
    sk = mesh.skeleton()
    if np.any(sk.area <= 0.0):
        raise MeshError("degenerate triangle in shape parameter")
    p = mesh.vertices[mesh.triangles]
    per = (
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        + np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        + np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    )
    inscribed = 2.0 * sk.area / (per / 2.0)
    return float((sk.diameter / inscribed).max())


def write_mesh(mesh: Mesh, path) -> None:
    """Write the ASCII mesh format: header, vertex lines, triangle lines."""
    with open(path, "w") as fh:
        fh.write(f"verts {mesh.n_vertices} tris {mesh.n_triangles}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17e} {y:.17e}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def read_mesh(path) -> Mesh:
    """Read the ASCII mesh format written by :func:`write_mesh`."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "verts" or header[2] != "tris":
            raise MeshError(f"bad mesh header in {path}")
        nv, nt = int(header[1]), int(header[3])
        verts = np.array(
            [[float(v) for v in fh.readline().split()] for _ in range(nv)]
        )
        tris = np.array(
            [[int(v) for v in fh.readline().split()] for _ in range(nt)]
        )
    return Mesh(verts, tris)

import numpy as np
import pytest

from crbiot.mesh import (
    Mesh,
    MeshError,
    build_structured,
    read_mesh,
    refine_uniform,
    shape_parameter,
    write_mesh,
)


def test_right_split_minimal():
    m = build_structured("right-split", 1)
    assert m.n_triangles == 2
    assert m.n_vertices == 4
    assert m.n_faces == 5
    assert len(m.interior_faces) == 1


def test_crisscross_minimal():
    m = build_structured("crisscross", 1)
    assert m.n_triangles == 4
    assert m.n_vertices == 5
    assert m.n_faces == 8
    assert len(m.interior_faces) == 4
    assert m.crisscross_cells.shape == (1, 4)


@pytest.mark.parametrize("kind,n", [("right-split", 4), ("crisscross", 3)])
def test_unit_area(kind, n):
    m = build_structured(kind, n)
    assert abs(m.skeleton().area.sum() - 1.0) < 1e-14


def test_counts_right_split():
    for n in (1, 2, 3, 5):
        m = build_structured("right-split", n)
        assert m.n_triangles == 2 * n * n
        # Euler relation on a simply connected mesh
        assert m.n_vertices - m.n_faces + m.n_triangles == 1


def test_zero_subdivisions_rejected():
    with pytest.raises(MeshError):
        build_structured("right-split", 0)


def test_refine_counts():
    m = build_structured("right-split", 1)
    assert refine_uniform(m).n_triangles == 8
    m = build_structured("crisscross", 1)
    m2 = refine_uniform(refine_uniform(m))
    assert m2.n_triangles == 64
    assert abs(m2.skeleton().area.sum() - 1.0) < 1e-13


def test_shape_parameter_right_isoceles():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    m = Mesh(verts, np.array([[0, 1, 2]]))
    expected = np.sqrt(2.0) * (2.0 + np.sqrt(2.0)) / 2.0
    assert abs(shape_parameter(m) - expected) < 1e-14


def test_shape_parameter_equilateral():
    s = 1.0
    verts = np.array([[0.0, 0.0], [s, 0.0], [s / 2.0, s * np.sqrt(3.0) / 2.0]])
    m = Mesh(verts, np.array([[0, 1, 2]]))
    # diam = s, inscribed diameter = 2 * area / semiperimeter = s / sqrt(3)
    assert abs(shape_parameter(m) - np.sqrt(3.0)) < 1e-14


def test_shape_parameter_refinement_invariant():
    m = build_structured("crisscross", 2)
    before = shape_parameter(m)
    after = shape_parameter(refine_uniform(m))
    assert abs(before - after) < 1e-12


def test_face_adjacency_symmetric():
    m = build_structured("right-split", 3)
    for f in range(m.n_faces):
        for t in m.face_tris[f]:
            if t >= 0:
                assert f in m.tri_faces[t]


def test_normals_unit_and_outward():
    m = build_structured("crisscross", 2)
    sk = m.skeleton()
    assert np.allclose(np.linalg.norm(sk.normal, axis=1), 1.0, atol=1e-14)
    for f in np.flatnonzero(m.is_boundary_face):
        mid = m.vertices[m.faces[f]].mean(axis=0)
        centroid = m.vertices[m.triangles[m.face_tris[f, 0]]].mean(axis=0)
        assert sk.normal[f] @ (mid - centroid) > 0


def test_positive_orientation_enforced():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        Mesh(verts, np.array([[0, 2, 1]]))


def test_ascii_roundtrip(tmp_path):
    m = build_structured("crisscross", 2)
    path = tmp_path / "mesh.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.allclose(m.vertices, m2.vertices, atol=0, rtol=0)

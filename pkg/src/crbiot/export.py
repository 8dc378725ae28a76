"""Result serialization: full-precision CSV tables and legacy VTK files.

The VTK writer splits points per triangle so that discontinuous P1 fields
can ride along as point data; piecewise constant fields and the cell-mean
resampled displacement are written as cell data.
"""

from __future__ import annotations

import os

import numpy as np

from .fespace import Field, SpaceKind, cr_to_dgp1
from .mesh import Mesh

__all__ = ["write_csv", "read_csv", "write_vtk", "export_solution"]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17e}"
    return str(v)


def write_csv(path, header: list, rows: list) -> None:
    """One header row, then one row per entity, full-precision floats."""
    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row[k]) for k in header) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV {path}: {exc}") from exc


def read_csv(path) -> tuple[list, list]:
    """Read a CSV written by :func:`write_csv`; floats where possible."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = []
        for line in fh:
            vals = line.rstrip("\n").split(",")
            row = {}
            for k, v in zip(header, vals):
                try:
                    row[k] = float(v)
                except ValueError:
                    row[k] = v
            rows.append(row)
    return header, rows


def write_vtk(
    path,
    mesh: Mesh,
    cell_scalars: dict | None = None,
    cell_vectors: dict | None = None,
    point_scalars: dict | None = None,
) -> None:
    """Legacy ASCII unstructured-grid file with per-triangle split points.

    ``point_scalars`` maps names to dGP1 coefficient vectors (3 per
    triangle); cell data maps names to (T,) or (T, 2) arrays.
    """
    nt = mesh.n_triangles
    pts = mesh.vertices[mesh.triangles].reshape(-1, 2)
    try:
        with open(path, "w") as fh:
            fh.write("# vtk DataFile Version 2.0\n")
            fh.write("crbiot fields\nASCII\nDATASET UNSTRUCTURED_GRID\n")
            fh.write(f"POINTS {3 * nt} double\n")
            for x, y in pts:
                fh.write(f"{x:.17e} {y:.17e} 0.0\n")
            fh.write(f"\nCELLS {nt} {4 * nt}\n")
            for t in range(nt):
                fh.write(f"3 {3 * t} {3 * t + 1} {3 * t + 2}\n")
            fh.write(f"\nCELL_TYPES {nt}\n")
            fh.write("5\n" * nt)
            if cell_scalars or cell_vectors:
                fh.write(f"\nCELL_DATA {nt}\n")
                for name, data in (cell_scalars or {}).items():
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    for v in np.asarray(data):
                        fh.write(f"{v:.17e}\n")
                for name, data in (cell_vectors or {}).items():
                    fh.write(f"VECTORS {name} double\n")
                    for vx, vy in np.asarray(data):
                        fh.write(f"{vx:.17e} {vy:.17e} 0.0\n")
            if point_scalars:
                fh.write(f"\nPOINT_DATA {3 * nt}\n")
                for name, coeffs in point_scalars.items():
                    fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                    for v in np.asarray(coeffs):
                        fh.write(f"{v:.17e}\n")
    except OSError as exc:
        raise OSError(f"cannot write VTK {path}: {exc}") from exc


def cell_vectors_of_cr2(mesh: Mesh, u: Field) -> np.ndarray:
    """Cell-mean resampling of a CR2 field, (T, 2)."""
    n = len(u.coeffs) // 2
    ux = cr_to_dgp1(mesh, u.coeffs[:n]).reshape(-1, 3).mean(axis=1)
    uy = cr_to_dgp1(mesh, u.coeffs[n:]).reshape(-1, 3).mean(axis=1)
    return np.stack([ux, uy], axis=1)


def export_solution(out_dir, mesh: Mesh, sol) -> dict:
    """Write the VTK file and the per-cell CSV table of a solution."""
    os.makedirs(out_dir, exist_ok=True)
    vec = cell_vectors_of_cr2(mesh, sol.u)
    vtk_path = os.path.join(out_dir, "solution.vtk")
    write_vtk(
        vtk_path,
        mesh,
        cell_scalars={"p_total": sol.p_t.coeffs, "fluid_content": sol.m.coeffs},
        cell_vectors={"displacement": vec},
        point_scalars={"p_fluid": sol.p_f.coeffs},
    )
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    header = ["cell", "x", "y", "ux", "uy", "p_total", "fluid_content", "p_fluid_mean"]
    rows = [
        {
            "cell": t,
            "x": centroids[t, 0],
            "y": centroids[t, 1],
            "ux": vec[t, 0],
            "uy": vec[t, 1],
            "p_total": sol.p_t.coeffs[t],
            "fluid_content": sol.m.coeffs[t],
            "p_fluid_mean": sol.p_f.coeffs.reshape(-1, 3)[t].mean(),
        }
        for t in range(mesh.n_triangles)
    ]
    csv_path = os.path.join(out_dir, "solution.csv")
    write_csv(csv_path, header, rows)
    return {"vtk": vtk_path, "csv": csv_path}

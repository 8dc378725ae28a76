"""Nonconforming Crouzeix-Raviart / dG discretization of the Biot system.

Single-step (implicit-Euler) two-field Biot consolidation on 2D triangle
meshes: CR displacements, discontinuous P1 fluid pressure, moment-preserving
load smoothing, parameter-weighted stability norms, and the diagnostic
machinery (inf-sup constants, error notions, best approximations) used to
verify robustness and quasi-optimality.
"""

from .mesh import Mesh, build_structured, refine_uniform, shape_parameter
from .assembly import MaterialParams, DGConfig
from .solver import solve_biot, BiotSolution

__all__ = [
    "Mesh",
    "build_structured",
    "refine_uniform",
    "shape_parameter",
    "MaterialParams",
    "DGConfig",
    "solve_biot",
    "BiotSolution",
]

__version__ = "0.1.0"

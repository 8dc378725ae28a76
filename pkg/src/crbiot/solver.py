"""Direct solution of the coupled system, derived fields, lifts, stepping.

The coupled matrix is nonsymmetric; desk-scale problems are solved by a
sparse LU factorization. The discrete Riesz lifts below also provide the
computable surrogate of the H^-1 norm used throughout the analysis layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    DGConfig,
    LinearSystem,
    MaterialParams,
    assemble_B,
    assemble_rhs_plain,
    assemble_rhs_smoothed,
    forms,
)
from .fespace import Field, SpaceKind, mean0_part
from .mesh import Mesh

__all__ = [
    "BiotSolution",
    "SolverError",
    "solve_biot",
    "derived_fields",
    "riesz_lift_CR",
    "riesz_lift_dG",
    "dual_norm_p0",
    "time_march",
    "steady_state",
]

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorization failure or residual above tolerance."""


@dataclass
class BiotSolution:
    """Discrete displacement/pressure pair with derived P0 fields."""

    u: Field
    p_f: Field
    p_t: Field
    m: Field
    residual: float
    params: MaterialParams


def derived_fields(mesh: Mesh, params: MaterialParams, u: Field, p_f: Field):
    """Total pressure and total fluid content of a discrete pair."""
    fo_div = forms_div(mesh)
    div_u = fo_div @ u.coeffs
    p0_pf = p_f.coeffs.reshape(-1, 3).mean(axis=1)
    p_t = params.lam * div_u - params.alpha * mean0_part(mesh, p0_pf)
    m = params.alpha * div_u + params.sigma * p0_pf
    return Field(SpaceKind.P0_MEAN0, p_t), Field(SpaceKind.P0, m)


def forms_div(mesh: Mesh):
    # divergence map is penalty-independent; reuse any cached Forms
    cache = getattr(mesh, "_forms_cache", None)
    if cache:
        return next(iter(cache.values())).div
    from .assembly import div_map_cr2

    return div_map_cr2(mesh)


def solve_biot(
    system: LinearSystem, mesh: Mesh, params: MaterialParams,
    tol: float = RESIDUAL_TOL,
) -> BiotSolution:
    """Sparse direct solve of an assembled system with residual check.

    The matrix is symmetrically equilibrated by its diagonal before
    factorization; extreme parameter combinations otherwise push the raw
    condition number beyond what double precision can refine. The reported
    relative residual refers to the equilibrated system, where both
    equations carry comparable scales. A few refinement steps keep it
    within tolerance.
    """
    if system.rhs is None:
        raise SolverError("system has no right-hand side")
    b = system.rhs
    rel = 0.0
    if not np.any(b):
        x = np.zeros_like(b)
    else:
        import scipy.sparse as sp

        d = np.abs(system.matrix.diagonal())
        s = 1.0 / np.sqrt(np.where(d > 0.0, d, 1.0))
        S = sp.diags(s)
        mat = (S @ system.matrix @ S).tocsc()
        bs = s * b
        try:
            lu = spla.splu(mat)
        except RuntimeError as exc:
            raise SolverError(
                f"factorization failed for params {params}: {exc}"
            ) from exc
        y = lu.solve(bs)
        nb = np.linalg.norm(bs)
        for _ in range(4):
            r = bs - mat @ y
            rel = np.linalg.norm(r) / max(nb, 1e-300)
            if rel <= tol:
                break
            y = y + lu.solve(r)
        else:
            rel = np.linalg.norm(bs - mat @ y) / max(nb, 1e-300)
        x = s * y
    if np.any(b) and rel > tol:
        raise SolverError(f"relative residual {rel:.3e} exceeds {tol}")
    u = Field(SpaceKind.CR2, x[: system.n_u])
    p_f = Field(SpaceKind.DGP1, x[system.n_u :])
    p_t, m = derived_fields(mesh, params, u, p_f)
    return BiotSolution(u=u, p_f=p_f, p_t=p_t, m=m, residual=rel, params=params)


def riesz_lift_CR(mesh: Mesh, cfg: DGConfig, q0: Field) -> Field:
    """Lift of a mean-zero P0 field through the CR strain form."""
    fo = forms(mesh, cfg)
    rhs = fo.pair_div.T @ q0.coeffs
    return Field(SpaceKind.CR2, fo.solve_a_cr(rhs))


def riesz_lift_dG(mesh: Mesh, cfg: DGConfig, q: Field) -> Field:
    """Lift of a P0 field through the interior-penalty form."""
    fo = forms(mesh, cfg)
    rhs = fo.pair_mass.T @ q.coeffs
    return Field(SpaceKind.DGP1, fo.solve_a_dg(rhs))


def dual_norm_p0(mesh: Mesh, cfg: DGConfig, q) -> float:
    """Discrete H^-1 surrogate: dG norm of the Riesz lift of ``q``.

    ``q`` is a P0 Field or a raw coefficient vector.
    """
    coeffs = q.coeffs if isinstance(q, Field) else np.asarray(q)
    fo = forms(mesh, cfg)
    y = fo.solve_a_dg(fo.pair_mass.T @ coeffs)
    return float(np.sqrt(y @ (fo.g_dg @ y)))


def steady_state(mesh: Mesh, params: MaterialParams, cfg: DGConfig, f, gbar,
                 rhs_mode: str = "smoothed") -> BiotSolution:
    """Fixed point of the implicit-Euler stepper for time-constant loads.

    Solves the decoupled stationary equations: the dG pressure equation
    with conductivity ``kappa_bar``, then the elasticity block with the
    pressure coupling on the right-hand side.
    """
    fo = forms(mesh, cfg)
    loads = _step_loads(mesh, f, gbar, rhs_mode)
    p = spla.spsolve((params.kappa_bar * fo.a_dg).tocsc(), loads[fo.n_u :])
    import scipy.sparse as sp

    area = mesh.skeleton().area
    W = sp.diags(area)
    uu = 2.0 * params.mu * fo.a_cr + params.lam * (fo.div.T @ W @ fo.div)
    rhs_u = loads[: fo.n_u] + params.alpha * (fo.div.T @ (fo.pair_mass @ p))
    u = spla.spsolve(uu.tocsc(), rhs_u)
    uf = Field(SpaceKind.CR2, u)
    pf = Field(SpaceKind.DGP1, p)
    p_t, m = derived_fields(mesh, params, uf, pf)
    return BiotSolution(u=uf, p_f=pf, p_t=p_t, m=m, residual=0.0, params=params)


def _step_loads(mesh: Mesh, f, g, rhs_mode: str) -> np.ndarray:
    if rhs_mode == "smoothed":
        return assemble_rhs_smoothed(mesh, f, g)
    if rhs_mode == "plain":
        return assemble_rhs_plain(mesh, f, g)
    raise ValueError(f"unknown rhs mode {rhs_mode!r}")


def time_march(
    mesh: Mesh,
    params: MaterialParams,
    cfg: DGConfig,
    f_at,
    gbar_at,
    n_steps: int,
    m0: Field | None = None,
    rhs_mode: str = "smoothed",
) -> list[BiotSolution]:
    """Implicit-Euler marching of the time-dependent consolidation model.

    ``f_at(t)`` and ``gbar_at(t)`` return the spatial loads at time t (or
    None for zero). The fluid-content history enters the next step's
    right-hand side through the exact P0/dGP1 pairing; the conductivity
    seen by each step is ``tau * kappa_bar``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    fo = forms(mesh, cfg)
    system = assemble_B(mesh, params, cfg)
    m_prev = m0.coeffs.copy() if m0 is not None else np.zeros(mesh.n_triangles)
    tau = params.tau
    out: list[BiotSolution] = []
    for k in range(1, n_steps + 1):
        t = k * tau
        loads = _step_loads(mesh, f_at(t) if f_at else None,
                            gbar_at(t) if gbar_at else None, rhs_mode)
        rhs = loads.copy()
        rhs[fo.n_u :] *= 1.0  # f enters unscaled
        rhs[fo.n_u :] = tau * loads[fo.n_u :] + fo.pair_mass.T @ m_prev
        step_system = LinearSystem(system.matrix, rhs, system.n_u, system.n_p)
        try:
            sol = solve_biot(step_system, mesh, params)
        except SolverError as exc:
            raise SolverError(f"time step {k} failed: {exc}") from exc
        m_prev = sol.m.coeffs
        out.append(sol)
    return out

"""Figure rendering for the report paths.

Every driver that writes a delimited table also renders a companion PNG
next to it through these helpers. Rendering is non-interactive (Agg) and
never required for the numerical results themselves.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import matplotlib.tri as mtri
import numpy as np

__all__ = [
    "convergence_figure",
    "sweep_figure",
    "infsup_figure",
    "modes_figure",
]

plt.rcParams["figure.figsize"] = (6.4, 4.2)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3
plt.rcParams["savefig.dpi"] = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def convergence_figure(rows, path):
    """Log-log error components versus meshsize with a slope-1 guide."""
    h = np.array([r["h"] for r in rows])
    fig, ax = plt.subplots()
    series = [
        ("err_total", "total"),
        ("err_u", "displacement (CR)"),
        ("err_pt", "total pressure (L2)"),
        ("err_m", "fluid content (H-1)"),
        ("err_pf", "fluid pressure (dG)"),
    ]
    for key, label in series:
        vals = np.array([r[key] for r in rows])
        if np.any(vals > 0):
            ax.loglog(h, vals, "o-", label=label)
    ref = rows[0]["err_total"]
    if ref > 0:
        ax.loglog(h, ref * h / h[0], "k--", lw=0.8, label="slope 1")
    ax.set_xlabel("meshsize h")
    ax.set_ylabel("error")
    ax.invert_xaxis()
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=7)
    ax.set_title("convergence of the weighted error")
    return _finish(fig, path)


def sweep_figure(rows, path):
    """Quasi-optimality ratio and inf-sup constant across the grid."""
    idx = np.arange(len(rows))
    ratio = np.array([r.get("qopt_ratio", np.nan) for r in rows])
    beta = np.array([r.get("infsup_global", np.nan) for r in rows])
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.2))
    ax1.semilogy(idx, ratio, "o")
    ax1.axhline(10.0, color="r", ls="--", lw=0.8)
    ax1.set_ylabel("quasi-optimality ratio")
    ax2.semilogy(idx, beta, "s", color="tab:green")
    ax2.set_ylabel("weighted inf-sup")
    ax2.set_xlabel("grid point")
    labels = [
        f"$\\lambda$={r['lambda']:g}\n$\\bar\\kappa$={r['kappa_bar']:g}\n"
        f"$\\sigma$={r['sigma']:g}, $\\alpha$={r['alpha']:g}"
        for r in rows
    ]
    ax2.set_xticks(idx)
    ax2.set_xticklabels(labels, fontsize=5)
    ax1.set_title("parameter robustness")
    return _finish(fig, path)


def infsup_figure(rows, path):
    """Inf-sup constants per refinement level."""
    fig, ax = plt.subplots()
    pairs = sorted({r["pair"] for r in rows})
    for pair in pairs:
        sel = [r for r in rows if r["pair"] == pair]
        lev = [r["level"] for r in sel]
        val = [max(r["beta"], 1e-16) for r in sel]
        ax.semilogy(lev, val, "o-", label=pair)
    ax.axhline(1e-10, color="r", ls="--", lw=0.8, label="spurious threshold")
    ax.set_xlabel("level")
    ax.set_ylabel("inf-sup constant")
    ax.legend(fontsize=7)
    ax.set_title("discrete inf-sup constants")
    return _finish(fig, path)


def modes_figure(mesh, values, path):
    """Piecewise constant field on the mesh (checkerboard diagnostics)."""
    tri = mtri.Triangulation(
        mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles
    )
    fig, ax = plt.subplots(figsize=(4.8, 4.4))
    im = ax.tripcolor(tri, facecolors=np.asarray(values), cmap="RdBu_r",
                      edgecolors="k", lw=0.4)
    fig.colorbar(im, ax=ax, shrink=0.85)
    ax.set_aspect("equal")
    ax.set_title("checkerboard mode")
    return _finish(fig, path)

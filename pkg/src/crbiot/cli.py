"""Command-line entry point.

Subcommands: ``solve``, ``convergence``, ``sweep`` (each driven by a config
file), ``infsup`` (pair/mesh/levels flags), and ``modes`` (crisscross
diagnostics). No environment variables are required. All report paths
write CSV tables plus companion PNG figures into the output directory.
"""

from __future__ import annotations

import argparse
import sys

from .analysis import INFSUP_PAIRS
from .config import parse_config
from .drivers import run_convergence, run_infsup, run_modes, run_solve, run_sweep

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crbiot",
        description="Nonconforming CR/dG discretization of the Biot system",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in [
        ("solve", "solve one case and export the fields"),
        ("convergence", "refinement study with rates and best errors"),
        ("sweep", "parameter-grid robustness study"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="path to config file")

    p = sub.add_parser("infsup", help="inf-sup constants across levels")
    p.add_argument("--pair", required=True, choices=INFSUP_PAIRS)
    p.add_argument("--mesh", required=True, choices=["right-split", "crisscross"])
    p.add_argument("--levels", required=True, type=int)
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--out", default="out")

    p = sub.add_parser("modes", help="checkerboard-mode diagnostics")
    p.add_argument("--mesh", required=True, choices=["crisscross"])
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--eta", type=float, default=10.0)
    p.add_argument("--out", default="out")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            out = run_solve(parse_config(args.config))
            print(f"solved: residual {out['summary']['residual']:.3e}, "
                  f"ERR {out['summary']['err_total']:.6e}")
            for kind, path in out["paths"].items():
                print(f"  {kind}: {path}")
        elif args.command == "convergence":
            rows = run_convergence(parse_config(args.config))
            for r in rows:
                print(f"level {r['level']}: dofs {r['dofs']:>6} "
                      f"ERR {r['err_total']:.6e} rate {r['rate_total']:.3f} "
                      f"qopt {r['qopt_ratio']:.2f}")
        elif args.command == "sweep":
            rows = run_sweep(parse_config(args.config))
            for r in rows:
                print(f"lambda={r['lambda']:g} kappa_bar={r['kappa_bar']:g} "
                      f"sigma={r['sigma']:g} alpha={r['alpha']:g}: "
                      f"ERR {r['err_total']:.4e} qopt {r['qopt_ratio']:.2f} "
                      f"infsup {r['infsup_global']:.4e} [{r['status']}]")
        elif args.command == "infsup":
            rows = run_infsup(args.pair, args.mesh, args.levels,
                              eta=args.eta, out_dir=args.out)
            for r in rows:
                print(f"{r['pair']} level {r['level']}: beta {r['beta']:.6e}"
                      f" (spurious: {r['spurious']})")
        elif args.command == "modes":
            out = run_modes(args.n, eta=args.eta, out_dir=args.out)
            r = out["rows"][0]
            print(f"crisscross({args.n}): ortho residuals "
                  f"contP1 {r['ortho_contP1']:.2e}, CR {r['ortho_CR']:.2e}; "
                  f"div_contP1_P0 beta {r['infsup_div_contP1_P0']:.2e}")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

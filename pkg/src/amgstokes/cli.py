"""Command-line benchmark harness.

``amgstokes solve`` assembles or loads a saddle-point system, runs one solver
configuration and prints a JSON run report.  ``amgstokes dump`` writes a
generated problem as MatrixMarket files.

Exit codes: 0 converged, 2 not converged, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import SOLVER_IDS, make_solver, preset
from .errors import AmgStokesError
from .sparse import set_threads
from .stokes import assemble, relative_errors

SCHEMA_VERSION = 1
SCHEMA_FILE = Path(__file__).with_name("run_report.schema.json")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2

log = logging.getLogger("amgstokes")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _cube(text):
    kind, _, n = text.partition(":")
    if kind != "cube" or not n.isdigit():
        raise argparse.ArgumentTypeError(f"expected cube:N, got {text!r}")
    return int(n)


def build_parser():
    p = _Parser(prog="amgstokes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one solver configuration")
    src = s.add_argument_group("problem source")
    src.add_argument("--problem", type=_cube, metavar="cube:N", help="generated Stokes problem")
    src.add_argument("--matrix", type=Path, help="MatrixMarket coordinate matrix")
    src.add_argument("--rhs", type=Path, help="MatrixMarket array right-hand side")
    src.add_argument("--pmask", type=Path, help="MatrixMarket array of 0/1 pressure flags")
    src.add_argument("--exact", type=Path, help="reference solution for error norms")
    s.add_argument("--solver", choices=SOLVER_IDS, default="v2")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--maxiter", type=int, default=1000)
    s.add_argument("--eps-strong", type=float, default=1e-3)
    s.add_argument("--schur-variant", choices=("diag", "full"), default="diag")
    s.add_argument("--block-size", type=int, choices=(1, 3), default=None)
    s.add_argument("--precision", choices=("double", "single"), default=None)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=1234)
    s.add_argument("--json", type=Path, metavar="PATH", help="write the report here instead of stdout")

    d = sub.add_parser("dump", help="write a generated problem as MatrixMarket files")
    d.add_argument("--problem", type=_cube, metavar="cube:N", required=True)
    d.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return p


def _load(args):
    if args.problem is not None:
        if args.matrix or args.rhs or args.pmask:
            raise ValueError("--problem cannot be combined with --matrix/--rhs/--pmask")
        prob = assemble(args.problem)
        return prob.A, prob.rhs, prob.pmask, prob.exact()
    if args.matrix is None or args.rhs is None:
        raise ValueError("either --problem or both --matrix and --rhs are required")
    A = io.read_matrix(args.matrix)
    b = io.read_vector(args.rhs)
    if A.nrows != A.ncols or b.size != A.nrows:
        raise ValueError(f"matrix {A.nrows}x{A.ncols} and rhs of length {b.size} do not match")
    pmask = None
    if args.pmask is not None:
        pm = io.read_vector(args.pmask)
        if pm.size != A.nrows or not np.all((pm == 0) | (pm == 1)):
            raise ValueError("pmask must hold one 0/1 value per unknown")
        pmask = pm == 1
    exact = None
    if args.exact is not None:
        exact = io.read_vector(args.exact)
        if exact.size != A.nrows:
            raise ValueError("exact solution length does not match the matrix")
    return A, b, pmask, exact


def run(args) -> dict:
    """Set up and solve; returns the run report."""
    set_threads(args.threads)
    A, b, pmask, exact = _load(args)
    cfg = preset(args.solver, tol=args.tol, maxiter=args.maxiter, eps_strong=args.eps_strong,
                 schur_variant=args.schur_variant, block_size=args.block_size,
                 precision=args.precision, seed=args.seed)
    if cfg.precond == "schur" and pmask is None:
        raise ValueError(f"solver {args.solver} needs a pressure mask (--pmask)")
    solver = make_solver(A, cfg, pmask)
    x, rep = solver.solve(b)
    errors = None
    if exact is not None and pmask is not None:
        ev, ep = relative_errors(x, exact, pmask)
        errors = {"velocity": ev, "pressure": ep}
    report = {
        "schema_version": SCHEMA_VERSION,
        "solver_id": args.solver,
        "dofs": int(A.nrows),
        "nnz": int(A.nnz),
        "iters": int(rep.iters),
        "relres": float(rep.relres),
        "converged": bool(rep.converged),
        "setup_seconds": solver.setup_seconds,
        "solve_seconds": solver.solve_seconds,
        "memory": {
            "matrix_bytes": A.footprint().total,
            "preconditioner_bytes": solver.precond_footprint().total,
            "vectors_bytes": solver.vectors_bytes(),
        },
        "errors": errors,
    }
    _check_finite(report)
    return report


def _check_finite(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            _check_finite(v)
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise AmgStokesError("report contains a non-finite number")


def dump(args):
    prob = assemble(args.problem)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    io.write_matrix(out / "A.mtx", prob.A)
    io.write_vector(out / "b.mtx", prob.rhs)
    io.write_vector(out / "pmask.mtx", prob.pmask.astype(np.float64))
    io.write_vector(out / "x_exact.mtx", prob.exact())
    return [out / f for f in ("A.mtx", "b.mtx", "pmask.mtx", "x_exact.mtx")]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "dump":
            for path in dump(args):
                print(path)
            return EXIT_OK
        report = run(args)
    except (AmgStokesError, ValueError, OSError) as e:
        print(f"amgstokes: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    text = json.dumps(report, indent=2)
    if args.json is not None:
        args.json.write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK if report["converged"] else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())

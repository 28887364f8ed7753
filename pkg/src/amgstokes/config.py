"""Solver configurations and the named V1-V4 presets.

=====  ==========================================================
 id    wiring
=====  ==========================================================
 v1    IDR(5) + ILU(1) on the monolithic system
 v2    IDR(5) + Schur pressure correction, scalar nested solvers
 v3    v2 with a 3x3 block-valued velocity solver
 v4    v3 with single-precision nested solvers
=====  ==========================================================
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .amg import AmgParams, build_hierarchy
from .errors import SetupFailure
from .krylov import SOLVERS, IterParams
from .relax import make_relaxation
from .schur import SchurConfig, schur_setup
from .sparse import Footprint, SparseMatrix

SOLVER_IDS = ("v1", "v2", "v3", "v4", "custom")
PRECONDITIONERS = ("schur", "amg", "iluk", "ilu0", "ilut", "spai0", "jacobi", "none")


@dataclass
class SolverConfig:
    solver_id: str = "custom"
    outer: str = "idrs"
    iter: IterParams = field(default_factory=IterParams)
    precond: str = "schur"
    relax_opts: dict = field(default_factory=dict)
    amg: AmgParams = field(default_factory=AmgParams)
    schur: SchurConfig = field(default_factory=SchurConfig)

    def __post_init__(self):
        if self.solver_id not in SOLVER_IDS:
            raise ValueError(f"unknown solver id {self.solver_id!r}")
        if self.outer not in SOLVERS:
            raise ValueError(f"unknown outer solver {self.outer!r}")
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.precond!r}")


def preset(solver_id: str, tol=1e-6, maxiter=1000, eps_strong=1e-3, schur_variant="diag",
           block_size=None, precision=None, seed=1234) -> SolverConfig:
    """Named configuration; keyword overrides apply on top of the preset."""
    it = IterParams(tol=tol, maxiter=maxiter, s=5, seed=seed)
    adjust_p = {"diag": 1, "full": 2}[schur_variant]
    u_amg = AmgParams(eps_strong=eps_strong, coarsening="plain", relaxation="ilut", seed=seed)
    if solver_id == "v1":
        return SolverConfig("v1", "idrs", it, "iluk", {"k": 1})
    if solver_id in ("v2", "v3", "v4"):
        bs = {"v2": 1, "v3": 3, "v4": 3}[solver_id] if block_size is None else block_size
        prec = ("single" if solver_id == "v4" else "double") if precision is None else precision
        sc = SchurConfig(adjust_p=adjust_p, u_block_size=bs, nested_precision=prec, amg=u_amg)
        return SolverConfig(solver_id, "idrs", it, "schur", schur=sc)
    if solver_id == "custom":
        sc = SchurConfig(adjust_p=adjust_p, u_block_size=block_size or 1,
                         nested_precision=precision or "double", amg=u_amg)
        return SolverConfig("custom", "idrs", it, "schur", schur=sc)
    raise ValueError(f"unknown solver id {solver_id!r}")


class Solver:
    """A set-up preconditioner plus an outer Krylov method."""

    def __init__(self, A: SparseMatrix, config: SolverConfig, pmask=None):
        self.A = A
        self.config = config
        t0 = time.perf_counter()
        self.precond = _build_precond(A, config, pmask)
        self.setup_seconds = time.perf_counter() - t0
        self.solve_seconds = 0.0

    def solve(self, f, x0=None):
        t0 = time.perf_counter()
        x, report = SOLVERS[self.config.outer](self.A, f, self.precond, x0, self.config.iter)
        self.solve_seconds = time.perf_counter() - t0
        return x, report

    def precond_footprint(self) -> Footprint:
        return Footprint() if self.precond is None else self.precond.footprint()

    def vectors_bytes(self) -> int:
        """Work vectors of the outer method (solution, residual and Krylov bases)."""
        n = self.A.nrows * self.A.block_size
        it = self.config.iter
        count = {"idrs": 2 * it.s + 4, "gmres": 2 * it.M + 3, "preonly": 2}[self.config.outer]
        return count * n * 8


def _build_precond(A, cfg: SolverConfig, pmask):
    if cfg.precond == "none":
        return None
    if cfg.precond == "schur":
        if pmask is None:
            raise SetupFailure("the Schur preconditioner needs a pressure mask", stage="split")
        return schur_setup(A, pmask, cfg.schur)
    if cfg.precond == "amg":
        return build_hierarchy(A, cfg.amg)
    try:
        return make_relaxation(A, cfg.precond, **cfg.relax_opts)
    except SetupFailure:
        raise
    except ArithmeticError as e:
        raise SetupFailure(f"{cfg.precond} setup failed: {e}", stage="precond") from e


def make_solver(A: SparseMatrix, config: SolverConfig, pmask=None) -> Solver:
    return Solver(A, config, pmask)

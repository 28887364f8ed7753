"""Schur pressure-correction preconditioner for saddle-point systems.

The system is split by a pressure mask into::

    [ A_c  Bt ] [u]   [r_u]
    [ B_c  C  ] [p] = [r_p]

and preconditioned by an approximate block factorization in which the
velocity block is handled by a nested U-solver (AMG) and the pressure
Schur complement by a nested P-solver acting on
``S_hat = C - B_c diag(A_c)^{-1} Bt``.  Each nested solver is applied exactly
once per stage, so the composite operator is linear.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .amg import AmgParams, build_hierarchy
from .errors import AmgStokesError, DimensionMismatch, EmptySelection, SetupFailure
from .relax import make_relaxation
from .sparse import (
    Footprint,
    SparseMatrix,
    build_csr,
    diagonal,
    matmat,
    spmv,
    submatrix,
    to_block,
)
from .values import convert_precision

_PRECISIONS = {"double": np.float64, "single": np.float32}


@dataclass
class SaddleSplit:
    """Four blocks of a saddle-point matrix plus the index maps back to the full system."""

    A_c: SparseMatrix  # velocity-velocity
    B_c: SparseMatrix  # pressure rows, velocity columns
    Bt: SparseMatrix  # velocity rows, pressure columns
    C: SparseMatrix  # pressure-pressure
    pmask: np.ndarray

    @property
    def uidx(self):
        return np.flatnonzero(~self.pmask)

    @property
    def pidx(self):
        return np.flatnonzero(self.pmask)

    @property
    def n(self):
        return self.pmask.size

    def scatter(self, r):
        r = np.asarray(r)
        if r.shape != (self.n,):
            raise DimensionMismatch(f"vector of length {r.size} does not match split of size {self.n}")
        return r[~self.pmask], r[self.pmask]

    def gather(self, u, p):
        out = np.empty(self.n, dtype=np.result_type(u, p))
        out[~self.pmask] = u
        out[self.pmask] = p
        return out

    def matvec(self, x):
        """Product with the reassembled operator."""
        u, p = self.scatter(x)
        yu = spmv(1.0, self.A_c, u) + spmv(1.0, self.Bt, p)
        yp = spmv(1.0, self.B_c, u) + spmv(1.0, self.C, p)
        return self.gather(yu, yp)


def split_system(A: SparseMatrix, pmask) -> SaddleSplit:
    if A.nrows != A.ncols:
        raise DimensionMismatch("saddle split needs a square matrix")
    if A.block_size != 1:
        raise DimensionMismatch("saddle split needs a scalar matrix")
    pmask = np.asarray(pmask, dtype=bool)
    if pmask.shape != (A.nrows,):
        raise DimensionMismatch(f"pmask has length {pmask.size}, expected {A.nrows}")
    if pmask.all() or not pmask.any():
        raise EmptySelection("pmask must select at least one velocity and one pressure unknown")
    umask = ~pmask
    return SaddleSplit(
        A_c=submatrix(A, umask, umask),
        B_c=submatrix(A, pmask, umask),
        Bt=submatrix(A, umask, pmask),
        C=submatrix(A, pmask, pmask),
        pmask=pmask,
    )


def _scale_rows(d, A: SparseMatrix) -> SparseMatrix:
    return SparseMatrix(A.nrows, A.ncols, A.ptr, A.col, d[A.row_index()] * A.val, check=False)


def approx_schur(split: SaddleSplit, variant: str = "diag") -> SparseMatrix:
    """``C - B_c diag(A_c)^{-1} Bt``, either in full or reduced to its diagonal."""
    if variant not in ("diag", "full"):
        raise ValueError(f"unknown Schur variant {variant!r}")
    dinv = diagonal(split.A_c, invert=True)
    BDB = matmat(split.B_c, _scale_rows(dinv, split.Bt))
    C = split.C
    np_ = C.nrows
    if variant == "full":
        rows = np.concatenate((C.row_index(), BDB.row_index()))
        cols = np.concatenate((C.col, BDB.col))
        vals = np.concatenate((C.val, -BDB.val))
    else:
        r = BDB.row_index()
        on = r == BDB.col
        d = np.zeros(np_)
        d[r[on]] = BDB.val[on]
        idx = np.arange(np_)
        rows = np.concatenate((C.row_index(), idx))
        cols = np.concatenate((C.col, idx))
        vals = np.concatenate((C.val, -d))
    return build_csr(np_, np_, (rows, cols, vals))


@dataclass
class SchurConfig:
    """Nested-solver wiring.

    ``adjust_p`` selects the Schur approximation (1 = diagonal, 2 = full).
    ``usolver_factory(A_c)`` and ``psolver_factory(S_hat, split)`` override the
    default AMG and SPAI0 nested solvers; each must return an object with
    ``apply(r)`` (and ``narrow(dtype)`` if single precision is requested).
    """

    adjust_p: int = 1
    u_block_size: int = 1
    nested_precision: str = "double"
    amg: AmgParams = field(default_factory=lambda: AmgParams(coarsening="plain", relaxation="ilut"))
    p_relaxation: str = "spai0"
    usolver_factory: Callable | None = None
    psolver_factory: Callable | None = None

    def __post_init__(self):
        if self.adjust_p not in (1, 2):
            raise ValueError("adjust_p must be 1 (diag) or 2 (full)")
        if self.nested_precision not in _PRECISIONS:
            raise ValueError(f"nested_precision must be one of {sorted(_PRECISIONS)}")
        if self.u_block_size < 1:
            raise ValueError("u_block_size must be positive")

    @property
    def variant(self):
        return "diag" if self.adjust_p == 1 else "full"


class _Nested:
    """Nested preonly solver, with narrowing of inputs and widening of outputs."""

    def __init__(self, solver, dtype):
        self.solver = solver
        self.dtype = np.dtype(dtype)

    def apply(self, r):
        if self.dtype != r.dtype:
            r = convert_precision(r, self.dtype)
        return np.asarray(self.solver.apply(r), dtype=np.float64)

    def footprint(self):
        fp = getattr(self.solver, "footprint", None)
        return fp() if fp is not None else Footprint()


class SchurPC:
    """Schur pressure-correction preconditioner; build with :func:`schur_setup`."""

    def __init__(self, split, S_hat, usolver, psolver, config):
        self.split = split
        self.S_hat = S_hat
        self.usolver = usolver
        self.psolver = psolver
        self.config = config

    @property
    def variant(self):
        return self.config.variant

    @property
    def u_block_size(self):
        return self.config.u_block_size

    @property
    def nested_precision(self):
        return self.config.nested_precision

    def apply(self, r):
        """Five-step pressure-correction apply; scratch vectors are allocated per call."""
        sp_ = self.split
        r = np.asarray(r, dtype=np.float64)
        r_u, r_p = sp_.scatter(r)
        u = self.usolver.apply(r_u)
        r_p = r_p - spmv(1.0, sp_.B_c, u)
        p = self.psolver.apply(r_p)
        r_u = r_u - spmv(1.0, sp_.Bt, p)
        u = self.usolver.apply(r_u)
        return sp_.gather(u, p)

    def nested_footprint(self):
        return self.usolver.footprint() + self.psolver.footprint()

    def footprint(self):
        sp_ = self.split
        # coupling blocks used by the apply, plus u*, r_u', r_p' and the index map
        n = sp_.n
        own = sp_.B_c.footprint() + sp_.Bt.footprint()
        own = own + Footprint(aux=sp_.pmask.nbytes, vectors=2 * n * 8)
        return own + self.nested_footprint()


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except SetupFailure:
        raise
    except AmgStokesError as e:
        raise SetupFailure(f"{name} setup failed: {e}", stage=name) from e


def schur_setup(A: SparseMatrix, pmask, config: SchurConfig | None = None) -> SchurPC:
    """Split, form ``S_hat``, build nested solvers in double precision, then narrow if asked."""
    cfg = config or SchurConfig()
    split = _stage("split", split_system, A, pmask)
    S_hat = _stage("schur", approx_schur, split, cfg.variant)

    def build_u():
        A_u = split.A_c
        if cfg.u_block_size > 1:
            A_u = to_block(A_u, cfg.u_block_size)
        if cfg.usolver_factory is not None:
            return cfg.usolver_factory(A_u)
        return build_hierarchy(A_u, cfg.amg)

    def build_p():
        if cfg.psolver_factory is not None:
            return cfg.psolver_factory(S_hat, split)
        return make_relaxation(S_hat, cfg.p_relaxation)

    usolver = _stage("usolver", build_u)
    psolver = _stage("psolver", build_p)
    dt = _PRECISIONS[cfg.nested_precision]
    if dt != np.float64:
        usolver = usolver.narrow(dt)
        psolver = psolver.narrow(dt)
    return SchurPC(split, S_hat, _Nested(usolver, dt), _Nested(psolver, dt), cfg)


def schur_apply(pc: SchurPC, r):
    return pc.apply(r)

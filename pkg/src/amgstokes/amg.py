"""Aggregation-based algebraic multigrid.

The hierarchy is built from any value kind: strength of connection compares
block Frobenius norms, tentative prolongators carry identity blocks, and the
coarse operators are Galerkin products ``P^T A P``.  The coarsest level is
solved with a dense LU factorization.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, SetupFailure, ZeroDiagonal
from .relax import make_relaxation
from .sparse import (
    INDEX_DTYPE,
    Footprint,
    SparseMatrix,
    build_csr,
    convert_matrix_precision,
    diagonal,
    matmat,
    norm2,
    residual,
    spmv,
    transpose,
)
from .values import convert_precision

log = logging.getLogger(__name__)


@dataclass
class AmgParams:
    eps_strong: float = 1e-3
    coarsening: str = "smoothed"  # "plain" | "smoothed"
    omega: float = 0.72
    npre: int = 1
    npost: int = 1
    coarse_enough: int = 3000
    max_levels: int = 20
    relaxation: str = "spai0"
    relax_opts: dict = field(default_factory=dict)
    power_iters: int = 5
    # coarse-correction scaling; None picks 1.5 for plain and 1.0 for smoothed aggregation
    over_interp: float | None = None
    seed: int = 1234

    def __post_init__(self):
        if not 0 <= self.eps_strong < 1:
            raise ValueError("eps_strong must be in [0, 1)")
        if self.npre + self.npost < 1:
            raise ValueError("at least one smoothing sweep is required")
        if self.coarsening not in ("plain", "smoothed"):
            raise ValueError(f"unknown coarsening {self.coarsening!r}")


class Graph(NamedTuple):
    """Boolean sparsity pattern in CSR form (no diagonal)."""

    ptr: np.ndarray
    col: np.ndarray

    @property
    def n(self):
        return self.ptr.shape[0] - 1

    def edges(self):
        rows = np.repeat(np.arange(self.n, dtype=INDEX_DTYPE), np.diff(self.ptr))
        return rows, self.col


def _entry_norms(A: SparseMatrix):
    if A.block_size == 1:
        return np.abs(np.asarray(A.val, dtype=np.float64))
    return np.sqrt(np.sum(np.asarray(A.val, dtype=np.float64) ** 2, axis=(1, 2)))


def _pattern(n, rows, cols):
    key = np.unique(rows * n + cols)
    ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(key // n, minlength=n), out=ptr[1:])
    return Graph(ptr, key % n)


def strength_graph(A: SparseMatrix, eps_strong: float) -> Graph:
    """Edges (i, j), i != j, with ``|a_ij|^2 > eps^2 |a_ii| |a_jj|``, symmetrized."""
    if A.nrows != A.ncols:
        raise DimensionMismatch("strength graph needs a square matrix")
    n = A.nrows
    rows = A.row_index()
    norms = _entry_norms(A)
    on = rows == A.col
    d = np.zeros(n)
    d[rows[on]] = norms[on]
    if np.any(d == 0):
        raise ZeroDiagonal(f"row {int(np.flatnonzero(d == 0)[0])} has a zero diagonal")
    strong = ~on & (norms**2 > eps_strong**2 * d[rows] * d[A.col])
    r, c = rows[strong], A.col[strong]
    return _pattern(n, np.concatenate((r, c)), np.concatenate((c, r)))


def aggregate(S: Graph):
    """Greedy root-based aggregation in ascending node order.

    Pass 1: an unassigned node whose strong neighbours are all unassigned
    becomes a root and absorbs them.  Pass 2: remaining nodes join the
    aggregate of their first aggregated strong neighbour.  Nodes without any
    strong edge are left out of the coarse space (id -1).

    Returns ``(agg, ncoarse)``.
    """
    n = S.n
    ptr, col = S.ptr, S.col
    agg = np.full(n, -1, dtype=INDEX_DTYPE)
    isolated = np.diff(ptr) == 0
    count = 0
    for i in range(n):
        if agg[i] >= 0 or isolated[i]:
            continue
        nbrs = col[ptr[i]:ptr[i + 1]]
        if np.any(agg[nbrs] >= 0):
            continue
        agg[i] = count
        agg[nbrs] = count
        count += 1
    pending = np.flatnonzero((agg < 0) & ~isolated)
    # attach to neighbours aggregated in pass 1 only, so the result does not
    # depend on the order in which leftovers are visited
    first = agg.copy()
    for i in pending:
        nbrs = col[ptr[i]:ptr[i + 1]]
        hit = nbrs[first[nbrs] >= 0]
        if hit.size:
            agg[i] = first[hit[0]]
    # leftovers whose neighbours were all leftovers form their own aggregates
    for i in np.flatnonzero((agg < 0) & ~isolated):
        if agg[i] >= 0:
            continue
        agg[i] = count
        nbrs = col[ptr[i]:ptr[i + 1]]
        agg[nbrs[agg[nbrs] < 0]] = count
        count += 1
    return agg, count


def tentative_prolongator(agg, ncoarse, block_size=1, dtype=np.float64) -> SparseMatrix:
    """``P(i, agg[i]) = I``; rows of dropped nodes stay empty."""
    agg = np.asarray(agg, dtype=INDEX_DTYPE)
    n = agg.size
    keep = agg >= 0
    ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(keep, out=ptr[1:])
    nk = int(keep.sum())
    if block_size == 1:
        val = np.ones(nk, dtype=dtype)
    else:
        val = np.ascontiguousarray(np.broadcast_to(np.eye(block_size, dtype=dtype), (nk, block_size, block_size)))
    return SparseMatrix(n, ncoarse, ptr, agg[keep], val, check=False)


def _scale_rows(dinv, A: SparseMatrix) -> SparseMatrix:
    rows = A.row_index()
    if A.block_size == 1:
        val = dinv[rows] * A.val
    else:
        val = np.einsum("kij,kjl->kil", dinv[rows], A.val)
    return SparseMatrix(A.nrows, A.ncols, A.ptr, A.col, val, check=False)


def filtered_matrix(A: SparseMatrix, S: Graph) -> SparseMatrix:
    """Keep the diagonal and strong edges; weak entries are lumped into the diagonal."""
    n = A.nrows
    rows = A.row_index()
    key = rows * n + A.col
    skey = S.edges()[0] * n + S.col
    on = rows == A.col
    keep = on | np.isin(key, skey)
    lump = np.zeros((n,) + A.val.shape[1:], dtype=A.dtype)
    np.add.at(lump, rows[~keep], A.val[~keep])
    val = np.array(A.val[keep])
    krows = rows[keep]
    kon = on[keep]
    val[kon] += lump[krows[kon]]
    ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(krows, minlength=n), out=ptr[1:])
    return SparseMatrix(n, n, ptr, A.col[keep], val, check=False)


def spectral_radius(A: SparseMatrix, dinv, iters=5, seed=1234) -> float:
    """Power-iteration estimate of ``rho(D^{-1} A)``."""
    n = A.nrows * A.block_size
    x = np.random.default_rng(seed).uniform(-1, 1, n).astype(A.dtype)
    x /= norm2(x)
    DA = _scale_rows(dinv, A)
    rho = 0.0
    for _ in range(iters):
        y = spmv(1.0, DA, x)
        rho = norm2(y)
        if rho == 0:
            return 0.0
        x = y / rho
    return rho


def smooth_prolongator(A: SparseMatrix, P_tent: SparseMatrix, omega: float, S: Graph | None = None,
                       eps_strong: float = 0.0, power_iters=5, seed=1234) -> SparseMatrix:
    """``P = (I - w D^{-1} A_F) P_tent`` with ``w = omega / rho(D^{-1} A_F)``."""
    if omega == 0:
        return P_tent
    if S is None:
        S = strength_graph(A, eps_strong)
    AF = filtered_matrix(A, S)
    dinv = diagonal(AF, invert=True)
    rho = spectral_radius(AF, dinv, power_iters, seed)
    w = omega / rho if rho > 0 else 0.0
    DAP = _scale_rows(dinv, matmat(AF, P_tent))
    return _add(P_tent, DAP, 1.0, -w)


def _add(A: SparseMatrix, B: SparseMatrix, a, b) -> SparseMatrix:
    rows = np.concatenate((A.row_index(), B.row_index()))
    cols = np.concatenate((A.col, B.col))
    vals = np.concatenate((a * A.val, b * B.val)).astype(A.dtype)
    return build_csr(A.nrows, A.ncols, (rows, cols, vals), block_size=A.block_size, dtype=A.dtype)


def galerkin(A: SparseMatrix, P: SparseMatrix, R: SparseMatrix | None = None) -> SparseMatrix:
    """``R A P`` with ``R = P^T`` by default."""
    if A.ncols != P.nrows or A.nrows != A.ncols:
        raise DimensionMismatch(f"cannot form P^T A P for {A!r} and {P!r}")
    if R is None:
        R = transpose(P)
    return matmat(R, matmat(A, P))


class DenseCoarse:
    """Dense LU (partial pivoting) of the coarsest operator."""

    def __init__(self, lu, piv):
        self.lu = lu
        self.piv = piv

    @classmethod
    def setup(cls, A: SparseMatrix):
        D = np.asarray(A.todense(), dtype=np.float64)
        with warnings.catch_warnings():
            # singularity is checked below from the pivots
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(D, check_finite=False)
        d = np.abs(np.diag(lu))
        if d.size and (not np.all(np.isfinite(lu)) or d.min() <= 1e-14 * max(d.max(), 1e-300)):
            raise SetupFailure("coarsest matrix is singular", stage="coarse")
        return cls(lu.astype(A.dtype), piv)

    @property
    def dtype(self):
        return self.lu.dtype

    def apply(self, r):
        return scipy.linalg.lu_solve((self.lu, self.piv), np.asarray(r, dtype=self.lu.dtype), check_finite=False)

    def narrow(self, dtype):
        return DenseCoarse(convert_precision(self.lu, dtype), self.piv)

    def footprint(self):
        return Footprint(val=self.lu.nbytes, aux=self.piv.nbytes)


class SmootherCoarse:
    """Fallback coarsest solve by repeated smoothing when coarsening stalls on a large level."""

    def __init__(self, A, smoother, sweeps):
        self.A = A
        self.smoother = smoother
        self.sweeps = sweeps

    @property
    def dtype(self):
        return self.A.dtype

    def apply(self, r):
        x = np.zeros(r.size, dtype=self.A.dtype)
        for _ in range(self.sweeps):
            self.smoother.relax(self.A, r, x)
        return x

    def narrow(self, dtype):
        return SmootherCoarse(convert_matrix_precision(self.A, dtype), self.smoother.narrow(dtype), self.sweeps)

    def footprint(self):
        return Footprint()


@dataclass
class Level:
    A: SparseMatrix
    P: SparseMatrix | None = None
    R: SparseMatrix | None = None
    smoother: object = None

    def footprint(self):
        fp = self.A.footprint()
        for part in (self.P, self.R, self.smoother):
            if part is not None:
                fp = fp + part.footprint()
        # rhs, solution and residual work vectors
        n = self.A.nrows * self.A.block_size
        return fp + Footprint(vectors=3 * n * self.A.dtype.itemsize)


class AmgHierarchy:
    """Multigrid levels plus the coarsest solver; ``apply`` runs one V-cycle."""

    def __init__(self, levels, coarse, params: AmgParams):
        self.levels = levels
        self.coarse = coarse
        self.params = params
        self.over_interp = params.over_interp if params.over_interp is not None else (
            1.5 if params.coarsening == "plain" else 1.0)

    @property
    def dtype(self):
        return self.levels[0].A.dtype

    @property
    def block_size(self):
        return self.levels[0].A.block_size

    def sizes(self):
        return [lv.A.nrows for lv in self.levels]

    def __len__(self):
        return len(self.levels)

    def apply(self, r):
        r = np.asarray(r)
        if r.dtype != self.dtype:
            r = r.astype(self.dtype)
        return self._cycle(0, r)

    def _cycle(self, l, rhs):
        lv = self.levels[l]
        if l == len(self.levels) - 1:
            return np.asarray(self.coarse.apply(rhs), dtype=self.dtype)
        x = np.zeros_like(rhs)
        for _ in range(self.params.npre):
            lv.smoother.relax(lv.A, rhs, x)
        rc = spmv(1.0, lv.R, residual(rhs, lv.A, x))
        x += spmv(self.over_interp, lv.P, self._cycle(l + 1, rc))
        for _ in range(self.params.npost):
            lv.smoother.relax(lv.A, rhs, x)
        return x

    def narrow(self, dtype):
        levels = [
            Level(
                convert_matrix_precision(lv.A, dtype),
                None if lv.P is None else convert_matrix_precision(lv.P, dtype),
                None if lv.R is None else convert_matrix_precision(lv.R, dtype),
                None if lv.smoother is None else lv.smoother.narrow(dtype),
            )
            for lv in self.levels
        ]
        return AmgHierarchy(levels, self.coarse.narrow(dtype), self.params)

    def footprint(self):
        fp = Footprint()
        for lv in self.levels:
            fp = fp + lv.footprint()
        return fp + self.coarse.footprint()


def build_hierarchy(A: SparseMatrix, params: AmgParams | None = None,
                    smoother_factory: Callable | None = None) -> AmgHierarchy:
    """Coarsen until the level is small enough, too deep, or coarsening stalls."""
    prm = params or AmgParams()
    if A.nrows != A.ncols:
        raise DimensionMismatch("AMG needs a square matrix")
    if smoother_factory is None:
        def smoother_factory(M):
            return make_relaxation(M, prm.relaxation, **prm.relax_opts)

    levels = []
    cur = A
    b = A.block_size
    while True:
        n = cur.nrows
        if n * b <= prm.coarse_enough or len(levels) + 1 >= prm.max_levels:
            break
        S = strength_graph(cur, prm.eps_strong)
        agg, nc = aggregate(S)
        if nc == 0 or nc >= n:
            log.debug("coarsening stalled at level %d (n=%d, nc=%d)", len(levels), n, nc)
            break
        P = tentative_prolongator(agg, nc, b, cur.dtype)
        if prm.coarsening == "smoothed":
            P = smooth_prolongator(cur, P, prm.omega, S, power_iters=prm.power_iters, seed=prm.seed)
        R = transpose(P)
        levels.append(Level(cur, P, R, smoother_factory(cur)))
        cur = galerkin(cur, P, R)
    last = Level(cur)
    if cur.nrows * b <= max(prm.coarse_enough, 1) * 4:
        try:
            coarse = DenseCoarse.setup(cur)
        except SetupFailure:
            if not levels:
                raise
            raise SetupFailure(f"coarsest matrix at level {len(levels)} is singular", stage="coarse") from None
    else:
        last.smoother = smoother_factory(cur)
        coarse = SmootherCoarse(cur, last.smoother, prm.npre + prm.npost)
    levels.append(last)
    return AmgHierarchy(levels, coarse, prm)


def vcycle_apply(H: AmgHierarchy, r):
    return H.apply(r)

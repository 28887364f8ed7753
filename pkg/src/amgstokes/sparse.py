"""CSR matrices over scalar or block values and the backend primitives.

Solvers only talk to matrices through :func:`spmv`, :func:`residual`,
:func:`inner_product`, :func:`axpby` and :func:`norm2`.  Vectors are always
flat 1-D arrays of scalars; block matrices interpret them as ``(n, b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numba
import numpy as np

from . import _kernels
from .errors import (
    DimensionMismatch,
    EmptySelection,
    IndexOutOfRange,
    NotDivisible,
    SingularBlock,
    ZeroDiagonal,
)
from .values import ValueKind, convert_precision

INDEX_DTYPE = np.int64

_threads = 1


def set_threads(n: int) -> None:
    """Set the data-parallel width used by :func:`spmv` (1 = serial)."""
    global _threads
    _threads = max(1, int(n))
    if _threads > 1:
        # touching the thread pool initializes numba's threading layer; skip it when serial
        # the bundled TBB may be too old; prefer layers that need no extra runtime
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
        numba.set_num_threads(min(_threads, numba.config.NUMBA_NUM_THREADS))


class SparseMatrix:
    """Immutable CSR matrix.

    ``val`` is ``(nnz,)`` for scalar matrices and ``(nnz, b, b)`` for block
    matrices; ``nrows``/``ncols`` count block rows/columns.
    """

    __slots__ = ("nrows", "ncols", "ptr", "col", "val")

    def __init__(self, nrows, ncols, ptr, col, val, check=True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.ptr = np.ascontiguousarray(ptr, dtype=INDEX_DTYPE)
        self.col = np.ascontiguousarray(col, dtype=INDEX_DTYPE)
        val = np.ascontiguousarray(val)
        if val.dtype not in (np.float64, np.float32):
            val = val.astype(np.float64)
        self.val = val
        for a in (self.ptr, self.col, self.val):
            a.flags.writeable = False
        if check:
            self._check()

    def _check(self):
        ptr, col, val = self.ptr, self.col, self.val
        if ptr.shape != (self.nrows + 1,) or ptr[0] != 0:
            raise ValueError("malformed row pointer")
        if np.any(np.diff(ptr) < 0) or ptr[-1] != col.shape[0]:
            raise ValueError("row pointer must be non-decreasing and end at nnz")
        if val.shape[0] != col.shape[0] or val.ndim not in (1, 3):
            raise ValueError("value array does not match column array")
        if val.ndim == 3 and (val.shape[1] != val.shape[2] or val.shape[1] not in (1, 2, 3, 4)):
            raise ValueError("block values must be b x b with b in 1..4")
        if col.size:
            if col.min() < 0 or col.max() >= self.ncols:
                raise IndexOutOfRange("column index out of range")
            same_row = np.repeat(np.arange(self.nrows), np.diff(ptr))
            d = np.diff(col)
            if np.any((d <= 0) & (same_row[1:] == same_row[:-1])):
                raise ValueError("columns must be strictly increasing within a row")
        if not np.all(np.isfinite(val)):
            raise ValueError("matrix values must be finite")

    # -- descriptors -----------------------------------------------------
    @property
    def block_size(self) -> int:
        return 1 if self.val.ndim == 1 else self.val.shape[1]

    @property
    def dtype(self):
        return self.val.dtype

    @property
    def kind(self) -> ValueKind:
        return ValueKind(self.block_size, self.dtype)

    @property
    def nnz(self) -> int:
        return int(self.col.shape[0])

    @property
    def shape(self):
        """Scalar shape."""
        b = self.block_size
        return (self.nrows * b, self.ncols * b)

    @property
    def blocks(self):
        b = self.block_size
        return self.val.reshape(-1, b, b)

    def row_index(self):
        return np.repeat(np.arange(self.nrows, dtype=INDEX_DTYPE), np.diff(self.ptr))

    def todense(self):
        b = self.block_size
        D = np.zeros(self.shape, dtype=self.dtype)
        rows = self.row_index()
        for r in range(b):
            for q in range(b):
                np.add.at(D, (rows * b + r, self.col * b + q), self.blocks[:, r, q])
        return D

    def astype(self, dtype):
        return convert_matrix_precision(self, dtype)

    def to_scipy(self):
        import scipy.sparse as sp

        A = self if self.block_size == 1 else to_scalar(self)
        return sp.csr_matrix((np.asarray(A.val), np.asarray(A.col), np.asarray(A.ptr)), shape=A.shape)

    @classmethod
    def from_scipy(cls, M):
        M = M.tocsr()
        M.sum_duplicates()
        M.sort_indices()
        return cls(M.shape[0], M.shape[1], M.indptr, M.indices, M.data)

    @classmethod
    def identity(cls, n, block_size=1, dtype=np.float64):
        ptr = np.arange(n + 1)
        col = np.arange(n)
        if block_size == 1:
            val = np.ones(n, dtype=dtype)
        else:
            val = np.broadcast_to(np.eye(block_size, dtype=dtype), (n, block_size, block_size))
        return cls(n, n, ptr, col, val)

    def matvec(self, x):
        return spmv(1.0, self, x, 0.0)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return matmat(self, other)
        return self.matvec(other)

    def footprint(self):
        return Footprint(ptr=self.ptr.nbytes, col=self.col.nbytes, val=self.val.nbytes)

    def __repr__(self):
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}, {self.kind})"


# -- memory accounting -----------------------------------------------------
@dataclass
class Footprint:
    """Byte counts of the arrays an object keeps alive.

    ``val`` counts every floating-point payload (matrix values, dense factors,
    scaling vectors); ``aux`` counts other integer arrays (pivots, index maps);
    ``vectors`` counts persistent work vectors.
    """

    ptr: int = 0
    col: int = 0
    val: int = 0
    aux: int = 0
    vectors: int = 0

    def __add__(self, other):
        return Footprint(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    @property
    def total(self) -> int:
        return self.ptr + self.col + self.val + self.aux + self.vectors

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["total"] = self.total
        return d


def memory_bytes(obj) -> Footprint:
    """Structure-accounted bytes of a matrix, hierarchy, preconditioner or solver."""
    if obj is None:
        return Footprint()
    if isinstance(obj, np.ndarray):
        return Footprint(val=obj.nbytes) if obj.dtype.kind == "f" else Footprint(aux=obj.nbytes)
    return obj.footprint()


# -- construction -----------------------------------------------------------
def build_csr(n, m, triplets, block_size=None, dtype=np.float64):
    """Assemble an ``n x m`` matrix from ``(row, col, value)`` triplets.

    ``triplets`` may be a list of tuples or a ``(rows, cols, vals)`` tuple of
    arrays.  Duplicates are summed.  Block values are given as ``(b, b)``
    arrays.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3 and not np.isscalar(triplets[0]):
        rows, cols, vals = triplets
        rows = np.asarray(rows, dtype=INDEX_DTYPE)
        cols = np.asarray(cols, dtype=INDEX_DTYPE)
        vals = np.asarray(vals, dtype=dtype)
    else:
        triplets = list(triplets)
        rows = np.array([t[0] for t in triplets], dtype=INDEX_DTYPE)
        cols = np.array([t[1] for t in triplets], dtype=INDEX_DTYPE)
        if triplets:
            vals = np.array([t[2] for t in triplets], dtype=dtype)
        else:
            b = block_size or 1
            vals = np.zeros((0,) if b == 1 else (0, b, b), dtype=dtype)
    if block_size is None:
        block_size = 1 if vals.ndim == 1 else vals.shape[1]
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
        raise IndexOutOfRange("triplet index out of range")
    key = rows * max(m, 1) + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    if key.size:
        first = np.concatenate(([True], key[1:] != key[:-1]))
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts, axis=0)
        key = key[starts]
    urows = key // max(m, 1)
    ucols = key % max(m, 1)
    ptr = np.zeros(n + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(urows, minlength=n), out=ptr[1:])
    if block_size == 1 and vals.ndim == 3:
        vals = vals.reshape(-1)
    return SparseMatrix(n, m, ptr, ucols, vals)


# -- primitives -------------------------------------------------------------
def _as_blocks(A: SparseMatrix):
    b = A.block_size
    return A.val.reshape(-1, b, b)


def spmv(alpha, A: SparseMatrix, x, beta=0.0, y=None):
    """``y <- alpha A x + beta y``; with ``beta == 0`` the old ``y`` is ignored."""
    b = A.block_size
    x = np.asarray(x)
    if x.shape != (A.ncols * b,):
        raise DimensionMismatch(f"x has shape {x.shape}, expected ({A.ncols * b},)")
    dt = A.dtype
    if x.dtype != dt:
        x = x.astype(dt)
    if y is None:
        y = np.zeros(A.nrows * b, dtype=dt)
        beta = 0.0
    elif y.shape != (A.nrows * b,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({A.nrows * b},)")
    yv = y if y.dtype == dt else y.astype(dt)
    kern = _kernels.spmv_parallel if _threads > 1 else _kernels.spmv_serial
    kern(dt.type(alpha), A.ptr, A.col, _as_blocks(A), x.reshape(-1, b), dt.type(beta), yv.reshape(-1, b))
    if yv is not y:
        y[:] = yv
    return y


def residual(f, A: SparseMatrix, x, r=None):
    """``r = f - A x``"""
    f = np.asarray(f)
    if f.shape != (A.nrows * A.block_size,):
        raise DimensionMismatch(f"f has shape {f.shape}, expected ({A.nrows * A.block_size},)")
    if r is None:
        r = np.array(f, dtype=A.dtype)
    else:
        r[:] = f
    return spmv(-1.0, A, x, 1.0, r)


def _same_length(x, y):
    if x.shape != y.shape:
        raise DimensionMismatch(f"vector shapes differ: {x.shape} vs {y.shape}")


def inner_product(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    _same_length(x, y)
    return float(np.dot(x.ravel(), y.ravel()))


def norm2(x):
    x = np.asarray(x).ravel()
    return float(np.sqrt(np.dot(x, x)))


def axpby(a, x, b, y):
    """``y <- a x + b y`` in place; returns ``y``."""
    x = np.asarray(x)
    _same_length(x, y)
    if b == 0:
        np.multiply(x, a, out=y, casting="unsafe")
    else:
        y *= b
        y += a * x
    return y


# -- structural operations --------------------------------------------------
def transpose(A: SparseMatrix) -> SparseMatrix:
    """Transpose; block values are adjointed."""
    rows = A.row_index()
    order = np.lexsort((rows, A.col))
    ptr = np.zeros(A.ncols + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(A.col, minlength=A.ncols), out=ptr[1:])
    val = A.val[order]
    if A.block_size > 1:
        val = np.ascontiguousarray(val.transpose(0, 2, 1))
    return SparseMatrix(A.ncols, A.nrows, ptr, rows[order], val, check=False)


def matmat(A: SparseMatrix, B: SparseMatrix) -> SparseMatrix:
    if A.ncols != B.nrows or A.block_size != B.block_size:
        raise DimensionMismatch(f"cannot multiply {A!r} by {B!r}")
    dt = np.result_type(A.dtype, B.dtype)
    bv = _as_blocks(B) if B.dtype == dt else _as_blocks(B).astype(dt)
    av = _as_blocks(A) if A.dtype == dt else _as_blocks(A).astype(dt)
    ptr, col, val = _kernels.spgemm(A.nrows, B.ncols, A.ptr, A.col, av, B.ptr, B.col, bv)
    if A.block_size == 1:
        val = val.reshape(-1)
    return SparseMatrix(A.nrows, B.ncols, ptr, col, val, check=False)


def diagonal(A: SparseMatrix, invert=False):
    """Main (block-)diagonal as ``(n,)`` or ``(n, b, b)``; optionally inverted."""
    if A.nrows != A.ncols:
        raise DimensionMismatch("diagonal requires a square matrix")
    b = A.block_size
    rows = A.row_index()
    on = rows == A.col
    present = np.zeros(A.nrows, dtype=bool)
    present[rows[on]] = True
    d = np.zeros((A.nrows, b, b), dtype=A.dtype)
    d[rows[on]] = _as_blocks(A)[on]
    if invert:
        if not present.all():
            raise ZeroDiagonal(f"row {int(np.flatnonzero(~present)[0])} has no diagonal entry")
        if b == 1:
            zero = d[:, 0, 0] == 0
            if zero.any():
                raise ZeroDiagonal(f"zero diagonal in row {int(np.flatnonzero(zero)[0])}")
            d = 1 / d
        else:
            out = np.empty_like(d)
            bad = _kernels.invert_blocks(d, out)
            if bad >= 0:
                raise SingularBlock(f"singular diagonal block in row {bad}")
            d = out
    return d.reshape(-1) if b == 1 else d


def to_block(A: SparseMatrix, b: int) -> SparseMatrix:
    """Regroup a scalar matrix into ``b x b`` tiles.

    Every tile touched by at least one stored scalar becomes a block entry;
    scalars absent inside such a tile are stored as explicit zeros.
    """
    if A.block_size != 1:
        raise ValueError("to_block expects a scalar matrix")
    if b == 1:
        return A
    if A.nrows % b or A.ncols % b:
        raise NotDivisible(f"{A.shape} is not divisible by block size {b}")
    nbr, nbc = A.nrows // b, A.ncols // b
    rows = A.row_index()
    br, bc = rows // b, A.col // b
    key = br * nbc + bc
    tiles, tile_of = np.unique(key, return_inverse=True)
    val = np.zeros((tiles.size, b, b), dtype=A.dtype)
    val[tile_of, rows % b, A.col % b] = A.val
    ptr = np.zeros(nbr + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(tiles // nbc, minlength=nbr), out=ptr[1:])
    return SparseMatrix(nbr, nbc, ptr, tiles % nbc, val, check=False)


def to_scalar(A: SparseMatrix) -> SparseMatrix:
    """Expand block tiles (explicit zeros included) into a scalar matrix."""
    b = A.block_size
    if b == 1:
        return A
    brow = A.row_index()
    r = np.arange(b)
    rows = (brow[:, None, None] * b + r[None, :, None]) + 0 * r[None, None, :]
    cols = (A.col[:, None, None] * b + r[None, None, :]) + 0 * r[None, :, None]
    return build_csr(A.nrows * b, A.ncols * b, (rows.ravel(), cols.ravel(), A.val.ravel()), dtype=A.dtype)


def convert_matrix_precision(A: SparseMatrix, dtype) -> SparseMatrix:
    """Entrywise precision change; structure arrays are shared."""
    dt = np.dtype(dtype)
    if dt == A.dtype:
        return A
    return SparseMatrix(A.nrows, A.ncols, A.ptr, A.col, convert_precision(A.val, dt), check=False)


def submatrix(A: SparseMatrix, row_mask, col_mask) -> SparseMatrix:
    """Restrict to the masked rows/columns, renumbered in ascending order."""
    row_mask = np.asarray(row_mask, dtype=bool)
    col_mask = np.asarray(col_mask, dtype=bool)
    if row_mask.shape != (A.nrows,) or col_mask.shape != (A.ncols,):
        raise DimensionMismatch("mask length does not match matrix dimensions")
    if not row_mask.any() or not col_mask.any():
        raise EmptySelection("selection is empty")
    rmap = np.cumsum(row_mask) - 1
    cmap = np.cumsum(col_mask) - 1
    rows = A.row_index()
    keep = row_mask[rows] & col_mask[A.col]
    nr, nc = int(row_mask.sum()), int(col_mask.sum())
    ptr = np.zeros(nr + 1, dtype=INDEX_DTYPE)
    np.cumsum(np.bincount(rmap[rows[keep]], minlength=nr), out=ptr[1:])
    return SparseMatrix(nr, nc, ptr, cmap[A.col[keep]], A.val[keep], check=False)

"""Value kinds: f64/f32 scalars and small square blocks.

A value kind is described by ``ValueKind(block_size, dtype)``.  Blocks are
plain ``(b, b)`` numpy arrays stored row-major; a block matrix keeps all of
its values in one contiguous ``(nnz, b, b)`` buffer.  Only real values are
supported and ``b`` is limited to 1..4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, PrecisionOverflow, SingularBlock

BLOCK_SIZES = (1, 2, 3, 4)
F32_MAX = float(np.finfo(np.float32).max)


@dataclass(frozen=True)
class ValueKind:
    block_size: int = 1
    dtype: np.dtype = np.dtype(np.float64)

    def __post_init__(self):
        if self.block_size not in BLOCK_SIZES:
            raise ValueError(f"block size must be one of {BLOCK_SIZES}")
        dt = np.dtype(self.dtype)
        if dt not in (np.dtype(np.float64), np.dtype(np.float32)):
            raise ValueError(f"unsupported dtype {dt}")
        object.__setattr__(self, "dtype", dt)

    @property
    def is_block(self) -> bool:
        return self.block_size > 1

    @property
    def itemsize(self) -> int:
        """Bytes per stored value (a whole block for block kinds)."""
        return self.block_size * self.block_size * self.dtype.itemsize

    def __str__(self):
        prec = "f64" if self.dtype == np.float64 else "f32"
        return f"scalar-{prec}" if self.block_size == 1 else f"block{self.block_size}-{prec}"


SCALAR_F64 = ValueKind(1, np.float64)
SCALAR_F32 = ValueKind(1, np.float32)
BLOCK3_F64 = ValueKind(3, np.float64)
BLOCK3_F32 = ValueKind(3, np.float32)
ALL_KINDS = (SCALAR_F64, SCALAR_F32, BLOCK3_F64, BLOCK3_F32)


def _square(X):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] not in BLOCK_SIZES:
        raise DimensionMismatch(f"expected a b x b block with b in {BLOCK_SIZES}, got {X.shape}")
    return X


def block_mul(X, Y):
    """Block times block, or block times b-vector."""
    X = _square(X)
    Y = np.asarray(Y)
    if Y.shape[0] != X.shape[0] or Y.ndim not in (1, 2):
        raise DimensionMismatch(f"cannot multiply {X.shape} by {Y.shape}")
    return X @ Y


def block_inverse(X):
    """Dense LU (partial pivoting) inverse of a small block.

    Raises SingularBlock when a pivot falls below ``1e-14 * ||X||_F``.
    """
    X = _square(X)
    out = np.empty_like(X, dtype=np.result_type(X.dtype, np.float32))
    if not _kernels.block_inv(np.ascontiguousarray(X), out):
        raise SingularBlock("block is numerically singular")
    return out


def block_norm(X) -> float:
    """Frobenius norm (also used as the magnitude of a scalar)."""
    X = np.asarray(X)
    if X.ndim == 0:
        return abs(float(X))
    return float(np.sqrt(np.sum(np.asarray(X, dtype=np.float64) ** 2)))


def adjoint(X):
    X = np.asarray(X)
    return X if X.ndim == 0 else X.T.copy()


def narrow(X):
    """Convert to single precision, refusing values outside the f32 range."""
    X = np.asarray(X)
    if X.size and not np.all(np.abs(X) <= F32_MAX):
        raise PrecisionOverflow("value exceeds single-precision range")
    return X.astype(np.float32)


def widen(X):
    return np.asarray(X).astype(np.float64)


def convert_precision(X, dtype):
    """Narrow or widen ``X`` to ``dtype``."""
    dt = np.dtype(dtype)
    if dt == np.float32:
        return narrow(X)
    if dt == np.float64:
        return widen(X)
    raise ValueError(f"unsupported dtype {dt}")

"""Compiled inner loops.

Every kernel works on block-shaped arrays: matrix values are ``(nnz, b, b)``
and vectors are ``(n, b)``.  Scalar matrices are passed as ``(nnz, 1, 1)``
views, so one compiled code path serves all value kinds; numba specializes
per dtype.
"""

import numpy as np
from numba import njit, prange

# Relative pivot threshold for dense block inversion.
PIVOT_RTOL = 1e-14


@njit(cache=True)
def block_frob(a):
    s = 0.0
    b = a.shape[0]
    for i in range(b):
        for j in range(b):
            s += float(a[i, j]) * float(a[i, j])
    return np.sqrt(s)


@njit(cache=True)
def block_inv(a, out):
    """Invert ``a`` into ``out`` by Gauss-Jordan with partial pivoting.

    Returns False when a pivot drops below ``PIVOT_RTOL * ||a||_F``.
    Arithmetic is carried out in float64 regardless of the storage dtype.
    """
    b = a.shape[0]
    thresh = PIVOT_RTOL * block_frob(a)
    w = np.empty((b, 2 * b))
    for i in range(b):
        for j in range(b):
            w[i, j] = a[i, j]
            w[i, b + j] = 1.0 if i == j else 0.0
    for c in range(b):
        p = c
        big = abs(w[c, c])
        for r in range(c + 1, b):
            if abs(w[r, c]) > big:
                big = abs(w[r, c])
                p = r
        if not big > thresh:
            return False
        if p != c:
            for j in range(2 * b):
                t = w[c, j]
                w[c, j] = w[p, j]
                w[p, j] = t
        piv = w[c, c]
        for j in range(2 * b):
            w[c, j] /= piv
        for r in range(b):
            if r != c:
                f = w[r, c]
                if f != 0.0:
                    for j in range(2 * b):
                        w[r, j] -= f * w[c, j]
    for i in range(b):
        for j in range(b):
            out[i, j] = w[i, b + j]
    return True


@njit(cache=True)
def block_gemm_sub(a, b_, out):
    """out -= a @ b_"""
    n = a.shape[0]
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            if aik != 0:
                for j in range(n):
                    out[i, j] -= aik * b_[k, j]


@njit(cache=True)
def block_gemm(a, b_, out):
    """out = a @ b_"""
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            out[i, j] = 0
    for i in range(n):
        for k in range(n):
            aik = a[i, k]
            if aik != 0:
                for j in range(n):
                    out[i, j] += aik * b_[k, j]


@njit(cache=True)
def spmv_serial(alpha, ptr, col, val, x, beta, y):
    n = ptr.shape[0] - 1
    b = val.shape[1]
    acc = np.zeros(b, dtype=y.dtype)
    for i in range(n):
        for r in range(b):
            acc[r] = 0
        for jj in range(ptr[i], ptr[i + 1]):
            c = col[jj]
            for r in range(b):
                s = acc[r]
                for q in range(b):
                    s += val[jj, r, q] * x[c, q]
                acc[r] = s
        if beta == 0:
            for r in range(b):
                y[i, r] = alpha * acc[r]
        else:
            for r in range(b):
                y[i, r] = alpha * acc[r] + beta * y[i, r]


@njit(cache=True, parallel=True)
def spmv_parallel(alpha, ptr, col, val, x, beta, y):
    n = ptr.shape[0] - 1
    b = val.shape[1]
    for i in prange(n):
        acc = np.zeros(b, dtype=y.dtype)
        for jj in range(ptr[i], ptr[i + 1]):
            c = col[jj]
            for r in range(b):
                s = acc[r]
                for q in range(b):
                    s += val[jj, r, q] * x[c, q]
                acc[r] = s
        if beta == 0:
            for r in range(b):
                y[i, r] = alpha * acc[r]
        else:
            for r in range(b):
                y[i, r] = alpha * acc[r] + beta * y[i, r]


@njit(cache=True)
def spgemm(na, nb_cols, aptr, acol, aval, bptr, bcol, bval):
    """Gustavson product C = A B on block values; columns of C come out sorted."""
    b = aval.shape[1]
    marker = np.full(nb_cols, -1, dtype=np.int64)
    cptr = np.zeros(na + 1, dtype=np.int64)
    # symbolic
    for i in range(na):
        cnt = 0
        for ja in range(aptr[i], aptr[i + 1]):
            k = acol[ja]
            for jb in range(bptr[k], bptr[k + 1]):
                c = bcol[jb]
                if marker[c] != i:
                    marker[c] = i
                    cnt += 1
        cptr[i + 1] = cptr[i] + cnt
    nnz = cptr[na]
    ccol = np.empty(nnz, dtype=np.int64)
    cval = np.zeros((nnz, b, b), dtype=aval.dtype)
    marker[:] = -1
    tmp = np.empty((b, b), dtype=aval.dtype)
    for i in range(na):
        head = cptr[i]
        pos = head
        for ja in range(aptr[i], aptr[i + 1]):
            k = acol[ja]
            for jb in range(bptr[k], bptr[k + 1]):
                c = bcol[jb]
                if marker[c] < head:
                    marker[c] = pos
                    ccol[pos] = c
                    pos += 1
        order = np.argsort(ccol[head:pos])
        cols = ccol[head:pos].copy()
        for t in range(pos - head):
            ccol[head + t] = cols[order[t]]
            marker[ccol[head + t]] = head + t
        for ja in range(aptr[i], aptr[i + 1]):
            k = acol[ja]
            for jb in range(bptr[k], bptr[k + 1]):
                c = bcol[jb]
                block_gemm(aval[ja], bval[jb], tmp)
                dst = cval[marker[c]]
                for r in range(b):
                    for q in range(b):
                        dst[r, q] += tmp[r, q]
    return cptr, ccol, cval


@njit(cache=True)
def invert_blocks(vals, out):
    """Invert every block; returns index of the first singular one or -1."""
    for i in range(vals.shape[0]):
        if not block_inv(vals[i], out[i]):
            return i
    return -1

"""Single-level preconditioners and smoothers.

Each class is built from a :class:`~amgstokes.sparse.SparseMatrix` of any
value kind and exposes

* ``apply(r)``: one application as a preconditioner, ``z = M r``;
* ``relax(A, rhs, x)``: one smoothing sweep ``x += M (rhs - A x)``;
* ``narrow(dtype)``: a copy with values stored in another precision;
* ``footprint()``: structure-accounted bytes.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import _kernels
from .errors import SingularBlock, ZeroDiagonal, ZeroPivot, ZeroRow
from .sparse import Footprint, SparseMatrix, convert_matrix_precision, diagonal, residual
from .values import convert_precision

# -- growable buffers for numba ------------------------------------------------


@njit(cache=True)
def _grow_i(a, need):
    if need <= a.shape[0]:
        return a
    out = np.empty(max(need, 2 * a.shape[0]), dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


@njit(cache=True)
def _grow_v(a, need):
    if need <= a.shape[0]:
        return a
    out = np.empty((max(need, 2 * a.shape[0]),) + a.shape[1:], dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


# -- ILU(k) --------------------------------------------------------------------


@njit(cache=True)
def _iluk_symbolic(n, ptr, col, k):
    """Level-of-fill pattern; returns (Lptr, Lcol, Uptr, Ucol), U strictly upper."""
    nxt = np.full(n + 1, -1, dtype=np.int64)
    lev = np.zeros(n, dtype=np.int64)
    inrow = np.full(n, -1, dtype=np.int64)
    Lptr = np.zeros(n + 1, dtype=np.int64)
    Uptr = np.zeros(n + 1, dtype=np.int64)
    cap = max(16, 2 * ptr[n])
    Lcol = np.empty(cap, dtype=np.int64)
    Ucol = np.empty(cap, dtype=np.int64)
    Ulev = np.empty(cap, dtype=np.int64)
    nl = 0
    nu = 0
    for i in range(n):
        # sorted linked list of the row's columns, sentinel n
        head = n
        tail = -1
        has_diag = False
        for jj in range(ptr[i], ptr[i + 1]):
            c = col[jj]
            if c == i:
                has_diag = True
        cols_iter = ptr[i + 1] - ptr[i] + (0 if has_diag else 1)
        # merge diagonal into the sorted column list
        pos = ptr[i]
        placed_diag = has_diag
        for _ in range(cols_iter):
            if not placed_diag and (pos >= ptr[i + 1] or col[pos] > i):
                c = i
                placed_diag = True
            else:
                c = col[pos]
                pos += 1
            inrow[c] = i
            lev[c] = 0
            if tail < 0:
                head = c
            else:
                nxt[tail] = c
            tail = c
        if tail >= 0:
            nxt[tail] = n
        cur = head
        while cur < i:
            lk = lev[cur]
            prev = cur
            for uu in range(Uptr[cur], Uptr[cur + 1]):
                j = Ucol[uu]
                nlv = lk + Ulev[uu] + 1
                if nlv > k:
                    continue
                if inrow[j] == i:
                    if nlv < lev[j]:
                        lev[j] = nlv
                else:
                    # insert j (> cur) keeping the list sorted; U columns ascend so
                    # scanning resumes from the previous insertion point
                    while nxt[prev] < j:
                        prev = nxt[prev]
                    nxt[j] = nxt[prev]
                    nxt[prev] = j
                    inrow[j] = i
                    lev[j] = nlv
                    prev = j
            cur = nxt[cur]
        cur = head
        while cur < n:
            if cur < i:
                Lcol = _grow_i(Lcol, nl + 1)
                Lcol[nl] = cur
                nl += 1
            elif cur > i:
                Ucol = _grow_i(Ucol, nu + 1)
                Ulev = _grow_i(Ulev, nu + 1)
                Ucol[nu] = cur
                Ulev[nu] = lev[cur]
                nu += 1
            cur = nxt[cur]
        Lptr[i + 1] = nl
        Uptr[i + 1] = nu
    return Lptr, Lcol[:nl].copy(), Uptr, Ucol[:nu].copy()


@njit(cache=True)
def _ilu_numeric(n, ptr, col, val, Lptr, Lcol, Uptr, Ucol):
    """IKJ factorization on a fixed pattern.

    Returns (Lval, Uval, Dinv, bad_row); ``bad_row >= 0`` flags a singular pivot.
    """
    b = val.shape[1]
    dt = val.dtype
    Lval = np.zeros((Lcol.shape[0], b, b), dtype=dt)
    Uval = np.zeros((Ucol.shape[0], b, b), dtype=dt)
    Dinv = np.zeros((n, b, b), dtype=dt)
    slot = np.full(n, -1, dtype=np.int64)
    w = np.zeros((n, b, b), dtype=dt)
    tmp = np.empty((b, b), dtype=dt)
    for i in range(n):
        for jj in range(Lptr[i], Lptr[i + 1]):
            slot[Lcol[jj]] = i
            w[Lcol[jj]] = 0
        for jj in range(Uptr[i], Uptr[i + 1]):
            slot[Ucol[jj]] = i
            w[Ucol[jj]] = 0
        slot[i] = i
        w[i] = 0
        for jj in range(ptr[i], ptr[i + 1]):
            w[col[jj]] += val[jj]
        for jj in range(Lptr[i], Lptr[i + 1]):
            kk = Lcol[jj]
            _kernels.block_gemm(w[kk], Dinv[kk], tmp)
            Lval[jj] = tmp
            for uu in range(Uptr[kk], Uptr[kk + 1]):
                j = Ucol[uu]
                if slot[j] == i:
                    _kernels.block_gemm_sub(tmp, Uval[uu], w[j])
        if not _kernels.block_inv(w[i], Dinv[i]):
            return Lval, Uval, Dinv, i
        for jj in range(Uptr[i], Uptr[i + 1]):
            Uval[jj] = w[Ucol[jj]]
    return Lval, Uval, Dinv, -1


@njit(cache=True)
def _ilu_solve(Lptr, Lcol, Lval, Uptr, Ucol, Uval, Dinv, r, z):
    n = Dinv.shape[0]
    b = Dinv.shape[1]
    y = np.empty(b, dtype=z.dtype)
    for i in range(n):
        for q in range(b):
            y[q] = r[i, q]
        for jj in range(Lptr[i], Lptr[i + 1]):
            c = Lcol[jj]
            for q in range(b):
                s = y[q]
                for t in range(b):
                    s -= Lval[jj, q, t] * z[c, t]
                y[q] = s
        for q in range(b):
            z[i, q] = y[q]
    for i in range(n - 1, -1, -1):
        for q in range(b):
            y[q] = z[i, q]
        for jj in range(Uptr[i], Uptr[i + 1]):
            c = Ucol[jj]
            for q in range(b):
                s = y[q]
                for t in range(b):
                    s -= Uval[jj, q, t] * z[c, t]
                y[q] = s
        for q in range(b):
            s = 0 * y[0]
            for t in range(b):
                s += Dinv[i, q, t] * y[t]
            z[i, q] = s


# -- ILUT ----------------------------------------------------------------------


@njit(cache=True)
def _ilut(n, ptr, col, val, tau, p):
    b = val.shape[1]
    dt = val.dtype
    nxt = np.full(n + 1, -1, dtype=np.int64)
    inrow = np.full(n, -1, dtype=np.int64)
    w = np.zeros((n, b, b), dtype=dt)
    tmp = np.empty((b, b), dtype=dt)
    Lptr = np.zeros(n + 1, dtype=np.int64)
    Uptr = np.zeros(n + 1, dtype=np.int64)
    cap = max(16, 2 * ptr[n])
    Lcol = np.empty(cap, dtype=np.int64)
    Ucol = np.empty(cap, dtype=np.int64)
    Lval = np.empty((cap, b, b), dtype=dt)
    Uval = np.empty((cap, b, b), dtype=dt)
    Dinv = np.zeros((n, b, b), dtype=dt)
    cand = np.empty(n, dtype=np.int64)
    norms = np.empty(n)
    nl = 0
    nu = 0
    for i in range(n):
        # load row i (diagonal forced into the pattern)
        rnorm2 = 0.0
        nlo = 0
        nup = 0
        head = n
        tail = -1
        has_diag = False
        for jj in range(ptr[i], ptr[i + 1]):
            if col[jj] == i:
                has_diag = True
        cnt = ptr[i + 1] - ptr[i] + (0 if has_diag else 1)
        pos = ptr[i]
        placed = has_diag
        for _ in range(cnt):
            if not placed and (pos >= ptr[i + 1] or col[pos] > i):
                c = i
                placed = True
                w[c] = 0
            else:
                c = col[pos]
                w[c] = val[pos]
                f = _kernels.block_frob(val[pos])
                rnorm2 += f * f
                pos += 1
            if c < i:
                nlo += 1
            elif c > i:
                nup += 1
            inrow[c] = i
            if tail < 0:
                head = c
            else:
                nxt[tail] = c
            tail = c
        nxt[tail] = n
        thresh = tau * np.sqrt(rnorm2)
        cur = head
        while cur < i:
            _kernels.block_gemm(w[cur], Dinv[cur], tmp)
            if _kernels.block_frob(tmp) < thresh:
                w[cur] = 0
                cur = nxt[cur]
                continue
            w[cur] = tmp
            prev = cur
            for uu in range(Uptr[cur], Uptr[cur + 1]):
                j = Ucol[uu]
                if inrow[j] != i:
                    while nxt[prev] < j:
                        prev = nxt[prev]
                    nxt[j] = nxt[prev]
                    nxt[prev] = j
                    inrow[j] = i
                    w[j] = 0
                    prev = j
                _kernels.block_gemm_sub(tmp, Uval[uu], w[j])
            cur = nxt[cur]
        # gather surviving L and U candidates
        nc_l = 0
        cur = head
        while cur < i:
            fnorm = _kernels.block_frob(w[cur])
            if fnorm >= thresh and fnorm > 0:
                cand[nc_l] = cur
                norms[nc_l] = fnorm
                nc_l += 1
            cur = nxt[cur]
        diag_at = cur
        keep = min(nc_l, nlo + p)
        order = np.argsort(-norms[:nc_l], kind="mergesort")
        sel = np.sort(cand[order[:keep]]) if keep < nc_l else cand[:nc_l].copy()
        Lcol = _grow_i(Lcol, nl + sel.shape[0])
        Lval = _grow_v(Lval, nl + sel.shape[0])
        for t in range(sel.shape[0]):
            Lcol[nl] = sel[t]
            Lval[nl] = w[sel[t]]
            nl += 1
        Lptr[i + 1] = nl
        if diag_at != i:
            return Lptr, Lcol, Lval, Uptr, Ucol, Uval, Dinv, i
        if not _kernels.block_inv(w[i], Dinv[i]):
            return Lptr, Lcol, Lval, Uptr, Ucol, Uval, Dinv, i
        nc_u = 0
        cur = nxt[i]
        while cur < n:
            fnorm = _kernels.block_frob(w[cur])
            if fnorm >= thresh and fnorm > 0:
                cand[nc_u] = cur
                norms[nc_u] = fnorm
                nc_u += 1
            cur = nxt[cur]
        keep = min(nc_u, nup + p)
        order = np.argsort(-norms[:nc_u], kind="mergesort")
        sel = np.sort(cand[order[:keep]]) if keep < nc_u else cand[:nc_u].copy()
        Ucol = _grow_i(Ucol, nu + sel.shape[0])
        Uval = _grow_v(Uval, nu + sel.shape[0])
        for t in range(sel.shape[0]):
            Ucol[nu] = sel[t]
            Uval[nu] = w[sel[t]]
            nu += 1
        Uptr[i + 1] = nu
    return Lptr, Lcol[:nl].copy(), Lval[:nl].copy(), Uptr, Ucol[:nu].copy(), Uval[:nu].copy(), Dinv, -1


# -- public classes --------------------------------------------------------------


class _Relaxation:
    def relax(self, A: SparseMatrix, rhs, x):
        x += self.apply(residual(rhs, A, x))
        return x


def _blocks(A):
    b = A.block_size
    return A.val.reshape(-1, b, b)


def _flat(v, b):
    return v.reshape(-1) if b == 1 else v


class IluFactors(_Relaxation):
    """Incomplete LU factors ``L`` (unit lower, stored strictly) and ``U``.

    ``U`` holds the strictly upper part; the inverted (block) pivots live in
    ``dinv``.  Build with :func:`iluk_setup` or :func:`ilut_setup`.
    """

    def __init__(self, L: SparseMatrix, U: SparseMatrix, dinv, info=None):
        self.L = L
        self.U = U
        self.dinv = dinv
        self.info = info or {}

    @property
    def block_size(self):
        return self.L.block_size

    @property
    def dtype(self):
        return self.dinv.dtype

    def apply(self, r):
        b = self.block_size
        n = self.dinv.shape[0]
        r = np.asarray(r)
        if r.dtype != self.dtype:
            r = r.astype(self.dtype)
        z = np.empty(n * b, dtype=self.dtype)
        dinv = self.dinv.reshape(n, b, b)
        _ilu_solve(
            self.L.ptr, self.L.col, _blocks(self.L), self.U.ptr, self.U.col, _blocks(self.U),
            dinv, r.reshape(n, b), z.reshape(n, b),
        )
        return z

    def narrow(self, dtype):
        return IluFactors(
            convert_matrix_precision(self.L, dtype),
            convert_matrix_precision(self.U, dtype),
            convert_precision(self.dinv, dtype),
            self.info,
        )

    def footprint(self):
        return self.L.footprint() + self.U.footprint() + Footprint(val=self.dinv.nbytes)


def _wrap_factors(A, Lptr, Lcol, Lval, Uptr, Ucol, Uval, Dinv, info):
    b = A.block_size
    L = SparseMatrix(A.nrows, A.nrows, Lptr, Lcol, _flat(Lval, b) if b == 1 else Lval, check=False)
    U = SparseMatrix(A.nrows, A.nrows, Uptr, Ucol, _flat(Uval, b) if b == 1 else Uval, check=False)
    return IluFactors(L, U, Dinv.reshape(-1) if b == 1 else Dinv, info)


def _require_square(A):
    if A.nrows != A.ncols:
        raise ValueError("incomplete factorization requires a square matrix")


def iluk_setup(A: SparseMatrix, k: int = 1) -> IluFactors:
    """ILU(k): level-of-fill pattern, then IKJ factorization on that pattern."""
    _require_square(A)
    if k < 0:
        raise ValueError("fill level must be >= 0")
    Lptr, Lcol, Uptr, Ucol = _iluk_symbolic(A.nrows, A.ptr, A.col, int(k))
    Lval, Uval, Dinv, bad = _ilu_numeric(A.nrows, A.ptr, A.col, _blocks(A), Lptr, Lcol, Uptr, Ucol)
    if bad >= 0:
        raise ZeroPivot(bad)
    return _wrap_factors(A, Lptr, Lcol, Lval, Uptr, Ucol, Uval, Dinv, {"type": "iluk", "k": int(k)})


def ilut_setup(A: SparseMatrix, tau: float = 1e-2, p: int = 2) -> IluFactors:
    """ILUT(tau, p): row-wise IKJ with threshold and row-count dropping.

    Entries below ``tau * ||row_i(A)||_2`` are dropped; each of the L and U
    parts of a row keeps at most (its count in ``A``) + ``p`` entries, largest
    first.  The diagonal is always kept.
    """
    _require_square(A)
    if tau < 0 or p < 1:
        raise ValueError("ILUT needs tau >= 0 and p >= 1")
    out = _ilut(A.nrows, A.ptr, A.col, _blocks(A), float(tau), int(p))
    if out[-1] >= 0:
        raise ZeroPivot(out[-1])
    return _wrap_factors(A, *out[:-1], {"type": "ilut", "tau": float(tau), "p": int(p)})


@njit(cache=True)
def _spai0_blocks(ptr, col, val, out):
    n = ptr.shape[0] - 1
    b = val.shape[1]
    for i in range(n):
        den = 0.0
        dpos = -1
        for jj in range(ptr[i], ptr[i + 1]):
            f = _kernels.block_frob(val[jj])
            den += f * f
            if col[jj] == i:
                dpos = jj
        if den == 0.0:
            return i, 0
        if dpos < 0:
            for q in range(b):
                for t in range(b):
                    out[i, q, t] = 0
            continue
        if b == 1:
            out[i, 0, 0] = val[dpos, 0, 0] / den
        else:
            if not _kernels.block_inv(val[dpos], out[i]):
                return i, 1
            dn = _kernels.block_frob(val[dpos])
            scale = dn * dn / den
            for q in range(b):
                for t in range(b):
                    out[i, q, t] *= scale
    return -1, 0


class Spai0(_Relaxation):
    """Diagonal sparse approximate inverse.

    Scalar rows use ``m_i = a_ii / sum_j a_ij^2``, the diagonal minimizer of
    ``||I - M A||_F``.  Block rows use ``A_II^{-1} ||A_II||_F^2 / sum_J ||A_IJ||_F^2``.
    """

    def __init__(self, m):
        self.m = m

    @classmethod
    def setup(cls, A: SparseMatrix):
        b = A.block_size
        out = np.zeros((A.nrows, b, b), dtype=A.dtype)
        bad, why = _spai0_blocks(A.ptr, A.col, _blocks(A), out)
        if bad >= 0:
            if why == 0:
                raise ZeroRow(f"row {bad} is entirely zero")
            raise SingularBlock(f"singular diagonal block in row {bad}")
        return cls(out.reshape(-1) if b == 1 else out)

    @property
    def dtype(self):
        return self.m.dtype

    def apply(self, r):
        r = np.asarray(r, dtype=self.m.dtype)
        if self.m.ndim == 1:
            return self.m * r
        n, b = self.m.shape[:2]
        return np.einsum("iqt,it->iq", self.m, r.reshape(n, b)).reshape(-1)

    def narrow(self, dtype):
        return Spai0(convert_precision(self.m, dtype))

    def footprint(self):
        return Footprint(val=self.m.nbytes)


def spai0_setup(A: SparseMatrix) -> Spai0:
    return Spai0.setup(A)


class DampedJacobi(_Relaxation):
    """``z = omega * diag(A)^{-1} r``"""

    def __init__(self, dinv, omega=1.0):
        self.dinv = dinv
        self.omega = omega

    @classmethod
    def setup(cls, A: SparseMatrix, omega=1.0):
        try:
            dinv = diagonal(A, invert=True)
        except SingularBlock as e:
            raise ZeroDiagonal(str(e)) from None
        return cls(dinv, omega)

    @property
    def dtype(self):
        return self.dinv.dtype

    def apply(self, r):
        r = np.asarray(r, dtype=self.dinv.dtype)
        if self.dinv.ndim == 1:
            return self.omega * self.dinv * r
        n, b = self.dinv.shape[:2]
        return self.omega * np.einsum("iqt,it->iq", self.dinv, r.reshape(n, b)).reshape(-1)

    def narrow(self, dtype):
        return DampedJacobi(convert_precision(self.dinv, dtype), self.omega)

    def footprint(self):
        return Footprint(val=self.dinv.nbytes)


def jacobi_apply(A: SparseMatrix, omega, r):
    return DampedJacobi.setup(A, omega).apply(r)


def ilu_apply(F: IluFactors, r):
    return F.apply(r)


def spai0_apply(m: Spai0, r):
    return m.apply(r)


def make_relaxation(A: SparseMatrix, kind: str, **opts):
    """Factory used by AMG levels and by ``as_preconditioner`` configs."""
    if kind == "iluk":
        return iluk_setup(A, opts.get("k", 1))
    if kind == "ilu0":
        return iluk_setup(A, 0)
    if kind == "ilut":
        return ilut_setup(A, opts.get("tau", 1e-2), opts.get("p", 2))
    if kind == "spai0":
        return Spai0.setup(A)
    if kind == "jacobi":
        return DampedJacobi.setup(A, opts.get("omega", 1.0))
    raise ValueError(f"unknown relaxation {kind!r}")
